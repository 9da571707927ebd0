//! JSON configuration: problems, tasks and tolerance overrides.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::hamiltonian::{CoefficientPath, Homotopy, MatrixFunction};
use crate::linalg::*;
use crate::symplectic::BoundaryCondition;

/// One boundary-value problem: coefficients on [0, T], boundary subspace R,
/// optional frame path a(t).
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub n: usize,
    pub t_end: f64,
    pub coeffs: CoefficientPath,
    pub bc: BoundaryCondition,
    pub frame: Option<MatrixFunction>,
    pub pol: TolerancePolicy,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Thm1,
    Thm2,
    Thm3,
    Cor1,
    RelativeMorse,
    BlockFlow,
    Lemma45,
    Concavity,
    Maslov,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "thm1" => Suite::Thm1,
            "thm2" => Suite::Thm2,
            "thm3" => Suite::Thm3,
            "cor1" => Suite::Cor1,
            "relative_morse" => Suite::RelativeMorse,
            "block_flow" => Suite::BlockFlow,
            "lemma45" => Suite::Lemma45,
            "concavity" => Suite::Concavity,
            "maslov" => Suite::Maslov,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Thm1 => "thm1",
            Suite::Thm2 => "thm2",
            Suite::Thm3 => "thm3",
            Suite::Cor1 => "cor1",
            Suite::RelativeMorse => "relative_morse",
            Suite::BlockFlow => "block_flow",
            Suite::Lemma45 => "lemma45",
            Suite::Concavity => "concavity",
            Suite::Maslov => "maslov",
        }
    }
}

/// Source of the symplectic path in a concavity task.
#[derive(Debug, Clone)]
pub enum PathSource {
    /// exp(tJH) on [0, T].
    Hamiltonian { h: CMatrix, t_end: f64 },
    /// Fundamental solution of the problem at s = 1.
    Problem(Box<ProblemSpec>),
}

#[derive(Debug, Clone)]
pub enum TaskSpec {
    Thm1(ProblemSpec),
    Cor1(ProblemSpec),
    Thm3(ProblemSpec),
    Maslov { problem: ProblemSpec, expected: Option<i64> },
    Thm2 { name: String, p: MatrixFunction, t_end: f64, bc: BoundaryCondition, pol: TolerancePolicy },
    Lemma45 { name: String, frame: MatrixFunction, t_end: f64, bc: BoundaryCondition, pol: TolerancePolicy },
    Concavity { name: String, path: PathSource, r1: CMatrix, r2: CMatrix, pol: TolerancePolicy },
    RelativeMorse { name: String, a: CMatrix, p: CMatrix, pol: TolerancePolicy },
    BlockFlow { name: String, a0: CMatrix, a1: CMatrix, pol: TolerancePolicy },
    Random { suite: Suite, n: Vec<usize>, count: usize, seed: u64, pol: TolerancePolicy },
}

#[derive(Debug, Clone)]
pub struct Config {
    pub tolerances: TolerancePolicy,
    pub mesh: Option<usize>,
    pub seed: Option<u64>,
    pub tasks: Vec<TaskSpec>,
}

fn err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::input(format!("{path}: {msg}"))
}

fn as_obj<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| err(path, "expected an object"))
}

fn req<'a>(m: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    m.get(key).ok_or_else(|| err(path, format!("missing field \"{key}\"")))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    let x = v.as_f64().ok_or_else(|| err(path, "expected a number"))?;
    if !x.is_finite() {
        return Err(err(path, "number is not finite"));
    }
    Ok(x)
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64().map(|x| x as usize).ok_or_else(|| err(path, "expected a non-negative integer"))
}

fn as_u64(v: &Value, path: &str) -> Result<u64> {
    v.as_u64().ok_or_else(|| err(path, "expected a non-negative integer"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| err(path, "expected a string"))
}

fn as_arr<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| err(path, "expected an array"))
}

/// A number or [re, im].
pub fn parse_scalar(v: &Value, path: &str) -> Result<C64> {
    match v {
        Value::Number(_) => Ok(re(as_f64(v, path)?)),
        Value::Array(a) if a.len() == 2 => Ok(c(as_f64(&a[0], &format!("{path}[0]"))?, as_f64(&a[1], &format!("{path}[1]"))?)),
        _ => Err(err(path, "expected a number or [re, im]")),
    }
}

/// A bare scalar (1×1) or an array of rows of scalars.
pub fn parse_matrix(v: &Value, path: &str) -> Result<CMatrix> {
    if v.is_number() {
        return Ok(CMatrix::from_element(1, 1, parse_scalar(v, path)?));
    }
    let rows = as_arr(v, path)?;
    if rows.is_empty() {
        return Err(err(path, "matrix has no rows"));
    }
    let mut data: Vec<Vec<C64>> = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let rp = format!("{path}[{i}]");
        let entries = as_arr(row, &rp).map_err(|_| err(&rp, "expected a row (array of scalars)"))?;
        data.push(entries.iter().enumerate().map(|(j, x)| parse_scalar(x, &format!("{rp}[{j}]"))).collect::<Result<_>>()?);
    }
    let cols = data[0].len();
    if let Some(i) = data.iter().position(|r| r.len() != cols) {
        return Err(err(&format!("{path}[{i}]"), format!("row has {} entries, expected {cols}", data[i].len())));
    }
    Ok(CMatrix::from_fn(data.len(), cols, |i, j| data[i][j]))
}

fn parse_square(v: &Value, path: &str, n: usize) -> Result<CMatrix> {
    let m = parse_matrix(v, path)?;
    if m.shape() != (n, n) {
        return Err(err(path, format!("expected a {n}x{n} matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(m)
}

pub fn parse_vector(v: &Value, path: &str, len: usize) -> Result<CVector> {
    let a = as_arr(v, path)?;
    if a.len() != len {
        return Err(err(path, format!("expected a vector of length {len}, got {}", a.len())));
    }
    Ok(CVector::from_iterator(len, a.iter().enumerate().map(|(i, x)| parse_scalar(x, &format!("{path}[{i}]"))).collect::<Result<Vec<_>>>()?))
}

/// Constant matrix, or {"kind": "constant" | "poly" | "samples", …}.
pub fn parse_matrix_function(v: &Value, path: &str, n: usize) -> Result<MatrixFunction> {
    let Some(m) = v.as_object() else {
        return Ok(MatrixFunction::Constant(parse_square(v, path, n)?));
    };
    let kind = as_str(req(m, "kind", path)?, &format!("{path}.kind"))?;
    match kind {
        "constant" => Ok(MatrixFunction::Constant(parse_square(req(m, "value", path)?, &format!("{path}.value"), n)?)),
        "poly" => {
            let cp = format!("{path}.coeffs");
            let cs = as_arr(req(m, "coeffs", path)?, &cp)?;
            if cs.is_empty() {
                return Err(err(&cp, "polynomial needs at least one coefficient"));
            }
            Ok(MatrixFunction::Poly(cs.iter().enumerate().map(|(i, x)| parse_square(x, &format!("{cp}[{i}]"), n)).collect::<Result<_>>()?))
        }
        "samples" => {
            let tp = format!("{path}.times");
            let times: Vec<f64> = as_arr(req(m, "times", path)?, &tp)?.iter().enumerate().map(|(i, x)| as_f64(x, &format!("{tp}[{i}]"))).collect::<Result<_>>()?;
            let vp = format!("{path}.values");
            let values: Vec<CMatrix> = as_arr(req(m, "values", path)?, &vp)?.iter().enumerate().map(|(i, x)| parse_square(x, &format!("{vp}[{i}]"), n)).collect::<Result<_>>()?;
            MatrixFunction::samples(times, values).map_err(|e| err(path, e))
        }
        other => Err(err(&format!("{path}.kind"), format!("unknown kind \"{other}\" (expected constant, poly or samples)"))),
    }
}

/// Columns spanning R ⊂ C^{2n}.
fn parse_span(v: &Value, path: &str, n: usize) -> Result<CMatrix> {
    let vs = as_arr(v, path)?;
    let mut m = zeros(2 * n, vs.len());
    for (k, x) in vs.iter().enumerate() {
        m.set_column(k, &parse_vector(x, &format!("{path}[{k}]"), 2 * n)?);
    }
    Ok(m)
}

pub fn parse_boundary(v: &Value, path: &str, n: usize, pol: &TolerancePolicy) -> Result<BoundaryCondition> {
    match v {
        Value::String(s) => match s.as_str() {
            "dirichlet" => Ok(BoundaryCondition::dirichlet(n)),
            "free" | "neumann" => Ok(BoundaryCondition::free(n)),
            "periodic" => Ok(BoundaryCondition::periodic(n)),
            other => Err(err(path, format!("unknown boundary preset \"{other}\""))),
        },
        Value::Object(m) => {
            let span = parse_span(req(m, "span", path)?, &format!("{path}.span"), n)?;
            BoundaryCondition::from_span(&span, n, pol).map_err(|e| err(path, e))
        }
        Value::Array(_) => BoundaryCondition::from_span(&parse_span(v, path, n)?, n, pol).map_err(|e| err(path, e)),
        _ => Err(err(path, "expected a preset name, a span object or a list of vectors")),
    }
}

pub fn parse_tolerances(v: Option<&Value>, path: &str, base: TolerancePolicy) -> Result<TolerancePolicy> {
    let Some(v) = v else { return Ok(base) };
    let m = as_obj(v, path)?;
    let mut pol = base;
    for (key, val) in m {
        let x = as_f64(val, &format!("{path}.{key}"))?;
        if !(x > 0.0) {
            return Err(err(&format!("{path}.{key}"), "tolerance must be positive"));
        }
        match key.as_str() {
            "rank" | "rank_tol" => pol.rank_tol = x,
            "eig" | "eig_zero_tol" => pol.eig_zero_tol = x,
            "residual" | "residual_tol" => pol.residual_tol = x,
            other => return Err(err(path, format!("unknown tolerance \"{other}\""))),
        }
    }
    Ok(pol)
}

fn parse_homotopy(v: &Value, path: &str, n: usize) -> Result<Homotopy> {
    let m = as_obj(v, path)?;
    match as_str(req(m, "kind", path)?, &format!("{path}.kind"))? {
        "scaled" => Ok(Homotopy::Scaled),
        "linear" => Ok(Homotopy::Linear {
            p0: parse_matrix_function(req(m, "p0", path)?, &format!("{path}.p0"), n)?,
            q0: parse_matrix_function(req(m, "q0", path)?, &format!("{path}.q0"), n)?,
            r0: parse_matrix_function(req(m, "r0", path)?, &format!("{path}.r0"), n)?,
        }),
        other => Err(err(&format!("{path}.kind"), format!("unknown homotopy \"{other}\""))),
    }
}

fn name_of(m: &Map<String, Value>, path: &str, default: String) -> Result<String> {
    match m.get("name") {
        Some(v) => Ok(as_str(v, &format!("{path}.name"))?.to_string()),
        None => Ok(default),
    }
}

fn parse_problem(m: &Map<String, Value>, path: &str, default_name: String, base: TolerancePolicy) -> Result<ProblemSpec> {
    let pol = parse_tolerances(m.get("tolerances"), &format!("{path}.tolerances"), base)?;
    let n = as_usize(req(m, "n", path)?, &format!("{path}.n"))?;
    if n == 0 {
        return Err(err(&format!("{path}.n"), "n must be positive"));
    }
    let t_end = as_f64(req(m, "T", path)?, &format!("{path}.T"))?;
    if !(t_end > 0.0) {
        return Err(err(&format!("{path}.T"), "T must be positive"));
    }
    let p = parse_matrix_function(req(m, "p", path)?, &format!("{path}.p"), n)?;
    let zero = MatrixFunction::Constant(zeros(n, n));
    let q = match m.get("q") {
        Some(v) => parse_matrix_function(v, &format!("{path}.q"), n)?,
        None => zero.clone(),
    };
    let r = match m.get("r") {
        Some(v) => parse_matrix_function(v, &format!("{path}.r"), n)?,
        None => zero,
    };
    let mut coeffs = CoefficientPath::new(n, t_end, p, q, r).map_err(|e| err(path, e))?;
    if let Some(h) = m.get("homotopy") {
        coeffs = coeffs.with_homotopy(parse_homotopy(h, &format!("{path}.homotopy"), n)?).map_err(|e| err(path, e))?;
    }
    let bc = parse_boundary(req(m, "boundary", path)?, &format!("{path}.boundary"), n, &pol)?;
    let frame = match m.get("frame") {
        Some(v) => Some(parse_matrix_function(v, &format!("{path}.frame"), n)?),
        None => None,
    };
    let seed = match m.get("seed") {
        Some(v) => Some(as_u64(v, &format!("{path}.seed"))?),
        None => None,
    };
    Ok(ProblemSpec { name: name_of(m, path, default_name)?, n, t_end, coeffs, bc, frame, pol, seed })
}

fn parse_task(v: &Value, idx: usize, base: TolerancePolicy) -> Result<TaskSpec> {
    let path = format!("tasks[{idx}]");
    let m = as_obj(v, &path)?;
    let task = as_str(req(m, "task", &path)?, &format!("{path}.task"))?;
    let default_name = format!("{task}_{idx}");
    let pol = parse_tolerances(m.get("tolerances"), &format!("{path}.tolerances"), base)?;
    let n_of = |m: &Map<String, Value>| -> Result<usize> {
        let n = as_usize(req(m, "n", &path)?, &format!("{path}.n"))?;
        if n == 0 {
            return Err(err(&format!("{path}.n"), "n must be positive"));
        }
        Ok(n)
    };
    let t_of = |m: &Map<String, Value>| -> Result<f64> {
        let t = as_f64(req(m, "T", &path)?, &format!("{path}.T"))?;
        if !(t > 0.0) {
            return Err(err(&format!("{path}.T"), "T must be positive"));
        }
        Ok(t)
    };
    Ok(match task {
        "thm1" => TaskSpec::Thm1(parse_problem(m, &path, default_name, base)?),
        "cor1" => TaskSpec::Cor1(parse_problem(m, &path, default_name, base)?),
        "thm3" => {
            let ps = parse_problem(m, &path, default_name, base)?;
            if ps.frame.is_none() {
                return Err(err(&path, "missing field \"frame\""));
            }
            TaskSpec::Thm3(ps)
        }
        "maslov" => {
            let expected = match m.get("expected") {
                Some(v) => Some(v.as_i64().ok_or_else(|| err(&format!("{path}.expected"), "expected an integer"))?),
                None => None,
            };
            TaskSpec::Maslov { problem: parse_problem(m, &path, default_name, base)?, expected }
        }
        "thm2" => {
            let n = n_of(m)?;
            TaskSpec::Thm2 {
                name: name_of(m, &path, default_name)?,
                p: parse_matrix_function(req(m, "P", &path)?, &format!("{path}.P"), n)?,
                t_end: t_of(m)?,
                bc: parse_boundary(req(m, "boundary", &path)?, &format!("{path}.boundary"), n, &pol)?,
                pol,
            }
        }
        "lemma45" => {
            let n = n_of(m)?;
            TaskSpec::Lemma45 {
                name: name_of(m, &path, default_name)?,
                frame: parse_matrix_function(req(m, "frame", &path)?, &format!("{path}.frame"), n)?,
                t_end: t_of(m)?,
                bc: parse_boundary(req(m, "boundary", &path)?, &format!("{path}.boundary"), n, &pol)?,
                pol,
            }
        }
        "concavity" => {
            let n = n_of(m)?;
            let path_src = if let Some(h) = m.get("hamiltonian") {
                let h = parse_square(h, &format!("{path}.hamiltonian"), 2 * n)?;
                PathSource::Hamiltonian { h, t_end: t_of(m)? }
            } else {
                PathSource::Problem(Box::new(parse_problem(m, &path, default_name.clone(), base)?))
            };
            TaskSpec::Concavity {
                name: name_of(m, &path, default_name)?,
                path: path_src,
                r1: parse_span(req(m, "R1", &path)?, &format!("{path}.R1"), n)?,
                r2: parse_span(req(m, "R2", &path)?, &format!("{path}.R2"), n)?,
                pol,
            }
        }
        "relative_morse" => {
            let a = parse_matrix(req(m, "A", &path)?, &format!("{path}.A"))?;
            let p = parse_matrix(req(m, "P", &path)?, &format!("{path}.P"))?;
            if a.nrows() != a.ncols() || p.shape() != a.shape() {
                return Err(err(&path, "A and P must be square of equal size"));
            }
            TaskSpec::RelativeMorse { name: name_of(m, &path, default_name)?, a, p, pol }
        }
        "block_flow" => {
            let a0 = parse_matrix(req(m, "A0", &path)?, &format!("{path}.A0"))?;
            let a1 = parse_matrix(req(m, "A1", &path)?, &format!("{path}.A1"))?;
            if a0.nrows() != a0.ncols() || a1.shape() != a0.shape() {
                return Err(err(&path, "A0 and A1 must be square of equal size"));
            }
            TaskSpec::BlockFlow { name: name_of(m, &path, default_name)?, a0, a1, pol }
        }
        "random" => {
            let sp = format!("{path}.suite");
            let sname = as_str(req(m, "suite", &path)?, &sp)?;
            let suite = Suite::parse(sname).ok_or_else(|| err(&sp, format!("unknown suite \"{sname}\"")))?;
            let n = match m.get("n") {
                None => vec![1, 2, 3],
                Some(Value::Array(a)) => a.iter().enumerate().map(|(i, x)| as_usize(x, &format!("{path}.n[{i}]"))).collect::<Result<_>>()?,
                Some(v) => vec![as_usize(v, &format!("{path}.n"))?],
            };
            if n.iter().any(|&k| k == 0 || k > 8) {
                return Err(err(&format!("{path}.n"), "sizes must lie in 1..=8"));
            }
            let count = match m.get("count") {
                Some(v) => as_usize(v, &format!("{path}.count"))?,
                None => 20,
            };
            let seed = match m.get("seed") {
                Some(v) => as_u64(v, &format!("{path}.seed"))?,
                None => 0,
            };
            TaskSpec::Random { suite, n, count, seed, pol }
        }
        other => return Err(err(&format!("{path}.task"), format!("unknown task \"{other}\""))),
    })
}

/// Parse a configuration document. JSON syntax errors carry line and column.
pub fn parse_config(text: &str, base: TolerancePolicy) -> Result<Config> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::input(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    let m = as_obj(&v, "config")?;
    let tolerances = parse_tolerances(m.get("tolerances"), "tolerances", base)?;
    let mesh = match m.get("mesh") {
        Some(x) => Some(as_usize(x, "mesh")?),
        None => None,
    };
    let seed = match m.get("seed") {
        Some(x) => Some(as_u64(x, "seed")?),
        None => None,
    };
    let tasks = match m.get("tasks") {
        None => vec![],
        Some(t) => as_arr(t, "tasks")?.iter().enumerate().map(|(i, x)| parse_task(x, i, tolerances)).collect::<Result<_>>()?,
    };
    for key in m.keys() {
        if !matches!(key.as_str(), "tolerances" | "mesh" | "seed" | "tasks" | "description") {
            return Err(err("config", format!("unknown field \"{key}\"")));
        }
    }
    Ok(Config { tolerances, mesh, seed, tasks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    #[test]
    fn scalars_and_matrices() {
        let m = parse_matrix(&serde_json::json!([[1, [0, 2]], [[0, -2], 3.5]]), "m").unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m[(0, 1)], c(0.0, 2.0));
        assert_eq!(parse_matrix(&serde_json::json!(4), "m").unwrap()[(0, 0)], re(4.0));
        let e = parse_matrix(&serde_json::json!([[1, 2], [3]]), "tasks[0].p").unwrap_err();
        assert!(e.to_string().contains("tasks[0].p[1]"), "{e}");
        let e = parse_matrix(&serde_json::json!([[1, "x"]]), "p").unwrap_err();
        assert!(e.to_string().contains("p[0][1]"), "{e}");
    }

    #[test]
    fn matrix_functions() {
        let f = parse_matrix_function(&serde_json::json!({"kind": "poly", "coeffs": [[[1]], [[2]]]}), "f", 1).unwrap();
        assert_eq!(f.eval(0.5)[(0, 0)], re(2.0));
        let f = parse_matrix_function(&serde_json::json!({"kind": "samples", "times": [0, 1], "values": [0, 2]}), "f", 1).unwrap();
        assert_eq!(f.eval(0.25)[(0, 0)], re(0.5));
        assert!(parse_matrix_function(&serde_json::json!({"kind": "spline"}), "f", 1).is_err());
        assert!(parse_matrix_function(&serde_json::json!([[1, 0]]), "f", 2).is_err());
    }

    #[test]
    fn empty_and_malformed_configs() {
        assert!(parse_config("{}", pol()).unwrap().tasks.is_empty());
        assert!(parse_config(r#"{"tasks": []}"#, pol()).unwrap().tasks.is_empty());
        let e = parse_config("{\n  \"tasks\": [\n", pol()).unwrap_err();
        assert!(e.is_input() && e.to_string().contains("line"), "{e}");
        let e = parse_config(r#"{"tasks": [{"task": "cor1", "n": 1, "T": 4, "p": [["a"]], "boundary": "dirichlet"}]}"#, pol()).unwrap_err();
        assert!(e.to_string().contains("tasks[0].p[0][0]"), "{e}");
        assert!(parse_config(r#"{"tasks": [{"task": "nope"}]}"#, pol()).is_err());
    }

    #[test]
    fn problem_fields() {
        let cfg = parse_config(
            r#"{"tolerances": {"rank": 1e-9}, "tasks": [{"task": "thm1", "n": 1, "T": 4, "p": 1, "r": -1,
                "boundary": {"span": []}, "homotopy": {"kind": "scaled"}}]}"#,
            pol(),
        )
        .unwrap();
        assert_eq!(cfg.tolerances.rank_tol, 1e-9);
        let TaskSpec::Thm1(ps) = &cfg.tasks[0] else { panic!() };
        assert_eq!(ps.bc.dim_r(), 0);
        assert_eq!(ps.pol.rank_tol, 1e-9);
        assert_eq!(ps.coeffs.at(0.5, 1.0).r[(0, 0)], re(-0.5));
    }
}
