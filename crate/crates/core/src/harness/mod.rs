//! Verification harness: configuration, seeded instances, checks and reports.

pub mod config;
pub mod generate;
pub mod report;
pub mod verify;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{fundamental_solution, SolverOptions, SymplecticPath};
use crate::index_form::MeshPolicy;
use crate::linalg::TolerancePolicy;

use config::{parse_config, PathSource, Suite, TaskSpec};
use generate::*;
use report::{exit_code, report_json, write_csvs, VerificationReport};
use verify::*;

/// Command-line overrides applied on top of a configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub rank_tol: Option<f64>,
    pub eig_tol: Option<f64>,
    pub mesh: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub report: Option<PathBuf>,
    pub csv_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub reports: Vec<VerificationReport>,
    pub exit_code: i32,
}

/// Mesh schedule starting at `first` elements.
pub fn mesh_policy(first: Option<usize>) -> MeshPolicy {
    match first {
        Some(n) => MeshPolicy { first: n.max(2), max: MeshPolicy::default().max.max(4 * n) },
        None => MeshPolicy::default(),
    }
}

/// Replace every `random` task by its seeded instances, in order.
pub fn expand(tasks: &[TaskSpec], seed_offset: u64) -> Vec<TaskSpec> {
    let mut out = Vec::new();
    for t in tasks {
        match t {
            TaskSpec::Random { suite, n, count, seed, pol } => {
                let base = seed.wrapping_add(seed_offset);
                out.extend(random_tasks(*suite, n, *count, base, *pol));
            }
            other => out.push(other.clone()),
        }
    }
    out
}

fn with_pol(mut ps: config::ProblemSpec, pol: TolerancePolicy, name: String) -> config::ProblemSpec {
    ps.pol = pol;
    ps.name = name;
    ps
}

/// `count` seeded instances of a suite for each size in `sizes`. The
/// finite-dimensional suites ignore the sizes.
pub fn random_tasks(suite: Suite, sizes: &[usize], count: usize, seed: u64, pol: TolerancePolicy) -> Vec<TaskSpec> {
    let mut out = Vec::new();
    let sizes: Vec<usize> = match suite {
        Suite::RelativeMorse | Suite::BlockFlow => vec![0],
        _ => sizes.to_vec(),
    };
    for &n in &sizes {
        for i in 0..count as u64 {
            let s = seed.wrapping_add(i);
            let name = if n == 0 { format!("{}_s{s}", suite.name()) } else { format!("{}_n{n}_s{s}", suite.name()) };
            let task = match suite {
                Suite::Thm1 => TaskSpec::Thm1(with_pol(generate_instance(s, n, random_dim_r(s, n), InstanceFlags::default()), pol, name)),
                Suite::Cor1 => {
                    let flags = InstanceFlags { p: PKind::Positive, degree: 1 };
                    TaskSpec::Cor1(with_pol(generate_instance(s, n, random_dim_r(s, n), flags), pol, name))
                }
                Suite::Maslov => TaskSpec::Maslov {
                    problem: with_pol(generate_instance(s, n, random_dim_r(s, n), InstanceFlags::default()), pol, name),
                    expected: None,
                },
                Suite::Thm3 => TaskSpec::Thm3(with_pol(generate_frame_instance(s, n), pol, name)),
                Suite::Thm2 => {
                    let (p, t_end, bc) = generate_thm2(s, n);
                    TaskSpec::Thm2 { name, p, t_end, bc, pol }
                }
                Suite::Lemma45 => {
                    let (frame, t_end, bc) = generate_lemma45(s, n);
                    TaskSpec::Lemma45 { name, frame, t_end, bc, pol }
                }
                Suite::Concavity => {
                    let (h, t_end, r1, r2) = generate_concavity(s, n);
                    TaskSpec::Concavity { name, path: PathSource::Hamiltonian { h, t_end }, r1, r2, pol }
                }
                Suite::RelativeMorse => {
                    let (a, p) = generate_relative_morse(s);
                    TaskSpec::RelativeMorse { name, a, p, pol }
                }
                Suite::BlockFlow => {
                    let (a0, a1) = generate_block_flow(s);
                    TaskSpec::BlockFlow { name, a0, a1, pol }
                }
            };
            out.push(task);
        }
    }
    out
}

fn concavity_path(src: &PathSource) -> Result<SymplecticPath> {
    match src {
        PathSource::Hamiltonian { h, t_end } => Ok(SymplecticPath::exp_hamiltonian(h, 0.0, *t_end)),
        PathSource::Problem(ps) => fundamental_solution(&ps.coeffs, 1.0, SolverOptions::default()),
    }
}

/// Run one concrete task. Index-form checks get an eigenvalue-flow trace
/// when `flow` is set or the check failed.
pub fn run_task_with(task: &TaskSpec, mesh: MeshPolicy, flow: bool) -> VerificationReport {
    let mut rep = run_task(task, mesh);
    if let TaskSpec::Thm1(ps) | TaskSpec::Cor1(ps) = task {
        if flow || !rep.pass {
            attach_flow(&mut rep, ps);
        }
    }
    rep
}

/// Run one concrete (non-random) task.
pub fn run_task(task: &TaskSpec, mesh: MeshPolicy) -> VerificationReport {
    match task {
        TaskSpec::Thm1(ps) => verify_thm1(ps, mesh),
        TaskSpec::Cor1(ps) => verify_cor1(ps, mesh),
        TaskSpec::Thm3(ps) => verify_thm3(ps),
        TaskSpec::Maslov { problem, expected } => verify_maslov(problem, *expected),
        TaskSpec::Thm2 { name, p, t_end, bc, pol } => verify_thm2(name, p, *t_end, bc, pol),
        TaskSpec::Lemma45 { name, frame, t_end, bc, pol } => verify_lemma45(name, frame, *t_end, bc, pol),
        TaskSpec::Concavity { name, path, r1, r2, pol } => match concavity_path(path) {
            Ok(g) => verify_concavity(name, &g, r1, r2, pol),
            Err(e) => {
                let mut r = VerificationReport::new("concavity", name);
                r.finish(Err(e));
                r
            }
        },
        TaskSpec::RelativeMorse { name, a, p, pol } => verify_relative_morse(name, a, p, pol),
        TaskSpec::BlockFlow { name, a0, a1, pol } => verify_block_flow(name, a0, a1, pol),
        TaskSpec::Random { suite, .. } => {
            let mut r = VerificationReport::new(suite.name(), "unexpanded");
            r.finish(Err(Error::contract("random tasks must be expanded before running")));
            r
        }
    }
}

/// Run tasks with up to `jobs` workers; the report order follows `tasks`.
pub fn run_tasks(tasks: &[TaskSpec], mesh: MeshPolicy, jobs: Option<usize>, flow: bool) -> Vec<VerificationReport> {
    let go = || tasks.par_iter().map(|t| run_task_with(t, mesh, flow)).collect::<Vec<_>>();
    match jobs {
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build() {
            Ok(pool) => pool.install(go),
            Err(_) => tasks.iter().map(|t| run_task_with(t, mesh, flow)).collect(),
        },
        None => go(),
    }
}

fn apply_overrides(pol: TolerancePolicy, opts: &RunOptions) -> TolerancePolicy {
    let mut p = pol;
    if let Some(x) = opts.rank_tol {
        p.rank_tol = x;
    }
    if let Some(x) = opts.eig_tol {
        p.eig_zero_tol = x;
    }
    p
}

fn input_failure(e: Error) -> RunOutcome {
    let mut r = VerificationReport::new("config", "config");
    r.finish(Err(e));
    RunOutcome { exit_code: exit_code(std::slice::from_ref(&r)), reports: vec![r] }
}

/// Parse `text`, run every task and write the requested artifacts.
pub fn run_config_text(text: &str, opts: &RunOptions) -> RunOutcome {
    let base = apply_overrides(TolerancePolicy::default(), opts);
    let cfg = match parse_config(text, base) {
        Ok(c) => c,
        Err(e) => return input_failure(e),
    };
    // Command-line tolerances win over per-task values.
    let mut tasks = expand(&cfg.tasks, opts.seed.or(cfg.seed).unwrap_or(0));
    for t in &mut tasks {
        override_task(t, opts);
    }
    let mesh = mesh_policy(opts.mesh.or(cfg.mesh));
    let reports = run_tasks(&tasks, mesh, opts.jobs, opts.csv_dir.is_some());
    let mut outcome = RunOutcome { exit_code: exit_code(&reports), reports };
    if let Err(e) = write_artifacts(&outcome.reports, opts) {
        outcome.exit_code = 2;
        eprintln!("error: {e}");
    }
    outcome
}

fn override_task(t: &mut TaskSpec, opts: &RunOptions) {
    let f = |p: &mut TolerancePolicy| *p = apply_overrides(*p, opts);
    match t {
        TaskSpec::Thm1(ps) | TaskSpec::Cor1(ps) | TaskSpec::Thm3(ps) | TaskSpec::Maslov { problem: ps, .. } => f(&mut ps.pol),
        TaskSpec::Thm2 { pol, .. }
        | TaskSpec::Lemma45 { pol, .. }
        | TaskSpec::Concavity { pol, .. }
        | TaskSpec::RelativeMorse { pol, .. }
        | TaskSpec::BlockFlow { pol, .. }
        | TaskSpec::Random { pol, .. } => f(pol),
    }
}

fn write_artifacts(reports: &[VerificationReport], opts: &RunOptions) -> std::io::Result<()> {
    if let Some(path) = &opts.report {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, report_json(reports))?;
    }
    if let Some(dir) = &opts.csv_dir {
        write_csvs(dir, reports)?;
    }
    Ok(())
}

/// Read and run a configuration file.
pub fn run_config(path: &Path, opts: &RunOptions) -> RunOutcome {
    match std::fs::read_to_string(path) {
        Ok(text) => run_config_text(&text, opts),
        Err(e) => input_failure(Error::input(format!("cannot read {}: {e}", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_passes() {
        let out = run_config_text(r#"{"tasks": []}"#, &RunOptions::default());
        assert_eq!(out.exit_code, 0);
        assert!(out.reports.is_empty());
    }

    #[test]
    fn malformed_config_is_input_error() {
        let out = run_config_text(r#"{"tasks": [{"task": "relative_morse", "A": [[1, 2], [3]], "P": [[1]]}]}"#, &RunOptions::default());
        assert_eq!(out.exit_code, 2);
        assert!(out.reports[0].error.as_deref().unwrap().contains("tasks[0].A[1]"));
    }

    #[test]
    fn random_suites_expand_in_order() {
        let tasks = expand(
            &[TaskSpec::Random { suite: Suite::RelativeMorse, n: vec![1, 2], count: 3, seed: 10, pol: TolerancePolicy::default() }],
            0,
        );
        let names: Vec<String> = tasks
            .iter()
            .map(|t| match t {
                TaskSpec::RelativeMorse { name, .. } => name.clone(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(names, ["relative_morse_s10", "relative_morse_s11", "relative_morse_s12"]);
    }

    #[test]
    fn finite_dimensional_suite_runs() {
        let out = run_config_text(r#"{"tasks": [{"task": "random", "suite": "block_flow", "count": 5}, {"task": "random", "suite": "relative_morse", "count": 5}]}"#, &RunOptions::default());
        assert_eq!(out.exit_code, 0, "{:?}", out.reports);
        assert_eq!(out.reports.len(), 10);
    }
}
