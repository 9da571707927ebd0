//! Verification reports, CSV traces and exit codes.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Error;
use crate::maslov::{CrossingRecord, MaslovResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Mismatch,
    Input,
    Numerical,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossingRow {
    pub t: f64,
    pub dim: usize,
    pub signature: i64,
    pub regular: bool,
}

impl From<&CrossingRecord> for CrossingRow {
    fn from(c: &CrossingRecord) -> Self {
        Self { t: c.t_star, dim: c.dim, signature: c.signature(), regular: c.regular }
    }
}

/// Outcome of one Maslov-index computation with both algorithms.
#[derive(Debug, Clone, Serialize)]
pub struct MaslovSummary {
    pub label: String,
    pub index: i64,
    pub crossing_form: Option<i64>,
    pub eigenphase: Option<i64>,
    pub agree: bool,
    pub perturbation: Option<f64>,
    pub nullity: usize,
    pub crossings: Vec<CrossingRow>,
}

impl MaslovSummary {
    pub fn new(label: &str, r: &MaslovResult) -> Self {
        let (cf, ep, agree) = match &r.agreement {
            Some(a) => (a.crossing_form, a.eigenphase, a.agree),
            None => (None, None, false),
        };
        Self {
            label: label.to_string(),
            index: r.index,
            crossing_form: cf,
            eigenphase: ep,
            agree,
            perturbation: r.perturbation,
            nullity: r.nullity,
            crossings: r.crossings.iter().map(CrossingRow::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub task: String,
    pub name: String,
    pub lhs: Option<i64>,
    pub rhs: Option<i64>,
    pub pass: bool,
    pub failure: Option<FailureKind>,
    pub error: Option<String>,
    pub maslov: Vec<MaslovSummary>,
    pub evidence: Map<String, Value>,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub eigenflow: Vec<(f64, Vec<f64>)>,
}

impl VerificationReport {
    pub fn new(task: &str, name: &str) -> Self {
        Self {
            task: task.to_string(),
            name: name.to_string(),
            lhs: None,
            rhs: None,
            pass: false,
            failure: None,
            error: None,
            maslov: vec![],
            evidence: Map::new(),
            wall_time_s: 0.0,
            eigenflow: vec![],
        }
    }

    pub fn set(&mut self, key: &str, v: impl Serialize) {
        self.evidence.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn record_maslov(&mut self, label: &str, r: &MaslovResult) {
        self.maslov.push(MaslovSummary::new(label, r));
    }

    pub fn finish(&mut self, outcome: Result<(i64, i64), Error>) {
        match outcome {
            Ok((l, r)) => {
                self.lhs = Some(l);
                self.rhs = Some(r);
                self.pass = l == r;
                if !self.pass {
                    self.failure = Some(FailureKind::Mismatch);
                }
            }
            Err(e) => {
                self.pass = false;
                self.failure = Some(if e.is_input() { FailureKind::Input } else { FailureKind::Numerical });
                self.error = Some(e.to_string());
            }
        }
    }

    /// Crossings of the first recorded Maslov computation, for CSV output.
    pub fn crossing_rows(&self) -> Vec<CrossingRow> {
        self.maslov.iter().flat_map(|m| m.crossings.iter().cloned()).collect()
    }
}

/// 0 when everything passed, 2 on input errors, 3 on numerical failures,
/// 1 on integer mismatches.
pub fn exit_code(reports: &[VerificationReport]) -> i32 {
    let has = |k: FailureKind| reports.iter().any(|r| r.failure == Some(k));
    if has(FailureKind::Input) {
        2
    } else if has(FailureKind::Numerical) {
        3
    } else if has(FailureKind::Mismatch) {
        1
    } else {
        0
    }
}

/// Report JSON with wall times zeroed, for byte comparisons.
pub fn report_body(reports: &[VerificationReport]) -> String {
    let stripped: Vec<VerificationReport> = reports
        .iter()
        .cloned()
        .map(|mut r| {
            r.wall_time_s = 0.0;
            r
        })
        .collect();
    serde_json::to_string_pretty(&stripped).expect("reports serialize")
}

pub fn report_json(reports: &[VerificationReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn crossings_csv(rows: &[CrossingRow]) -> String {
    let mut s = String::from("t,dim,signature,regular\n");
    for r in rows {
        let _ = writeln!(s, "{:.12e},{},{},{}", r.t, r.dim, r.signature, r.regular);
    }
    s
}

pub fn eigenflow_csv(flow: &[(f64, Vec<f64>)]) -> String {
    let k = flow.iter().map(|x| x.1.len()).max().unwrap_or(0);
    let mut s = String::from("s");
    for i in 0..k {
        let _ = write!(s, ",lambda_{i}");
    }
    s.push('\n');
    for (t, ev) in flow {
        let _ = write!(s, "{t:.6}");
        for x in ev {
            let _ = write!(s, ",{x:.12e}");
        }
        s.push('\n');
    }
    s
}

/// Write `crossings_<name>.csv` and `eigenflow_<name>.csv` where available.
pub fn write_csvs(dir: &Path, reports: &[VerificationReport]) -> std::io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for r in reports {
        let stem = file_stem(&r.name);
        let rows = r.crossing_rows();
        if !r.maslov.is_empty() {
            let f = format!("crossings_{stem}.csv");
            std::fs::write(dir.join(&f), crossings_csv(&rows))?;
            written.push(f);
        }
        if !r.eigenflow.is_empty() {
            let f = format!("eigenflow_{stem}.csv");
            std::fs::write(dir.join(&f), eigenflow_csv(&r.eigenflow))?;
            written.push(f);
        }
    }
    Ok(written)
}
