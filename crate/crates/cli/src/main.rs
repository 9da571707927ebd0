use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maslov_core::harness::{run_config, RunOptions};

#[derive(Parser)]
#[command(name = "maslov-flow", version, about = "Check index identities for linear Hamiltonian boundary problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task in a JSON configuration.
    Run {
        config: PathBuf,
        /// Write the full JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Directory for crossing and eigenvalue-flow CSV traces.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
        #[arg(long)]
        tol_rank: Option<f64>,
        #[arg(long)]
        tol_eig: Option<f64>,
        /// Number of elements on the first Galerkin mesh.
        #[arg(long)]
        mesh: Option<usize>,
        /// Offset added to the seed of every random task.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let Command::Run { config, report, csv_dir, tol_rank, tol_eig, mesh, seed, jobs } = Cli::parse().command;
    let opts = RunOptions { rank_tol: tol_rank, eig_tol: tol_eig, mesh, seed, jobs, report, csv_dir };
    let out = run_config(&config, &opts);

    let mut passed = 0;
    for r in &out.reports {
        let show = |x: Option<i64>| x.map_or("-".to_string(), |v| v.to_string());
        let status = if r.pass { "PASS" } else { "FAIL" };
        println!("{status} {:<10} {:<24} lhs={} rhs={} ({:.2}s)", r.task, r.name, show(r.lhs), show(r.rhs), r.wall_time_s);
        if let Some(e) = &r.error {
            eprintln!("  {}: {e}", r.name);
        }
        passed += r.pass as usize;
    }
    println!("{passed}/{} passed", out.reports.len());
    ExitCode::from(out.exit_code as u8)
}
