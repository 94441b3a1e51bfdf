//! Command-line driver for the reduced-order-model benchmark: offline basis
//! construction, online speed-up measurements, or both, plus a fast
//! invariant check suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fhn_core::harness::{
    run_check, run_full, run_offline, run_online, BenchmarkReport, CaseOutcome, ExperimentConfig,
    OfflineSummary,
};

#[derive(Parser)]
#[command(
    name = "fhn",
    about = "SIPG FitzHugh-Nagumo solver with POD / POD-DEIM reduced-order models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the training sweeps and build the reduced bases and operators.
    Offline(RunArgs),
    /// Benchmark the reduced models against the full model at the test
    /// parameters (requires a prior offline run in the same directory).
    Online(RunArgs),
    /// Offline phase followed by the online benchmark.
    Full(RunArgs),
    /// Run the fast invariant suite and report one line per check.
    Check {
        /// Mesh refinement level for the checks.
        #[arg(long, default_value_t = 2)]
        refinements: u32,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file; defaults to the benchmark setup.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Number of uniform mesh refinements.
    #[arg(long)]
    refinements: Option<u32>,

    /// Final simulation time.
    #[arg(long)]
    tfinal: Option<f64>,

    /// Solution-basis size (overrides the energy criterion).
    #[arg(long)]
    modes: Option<usize>,

    /// Interpolation-basis size (overrides the energy criterion).
    #[arg(long)]
    deim_modes: Option<usize>,

    /// Random seed for the initial conditions.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for artifacts and reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> fhn_core::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(r) = self.refinements {
            config.refinements = r;
        }
        if let Some(t) = self.tfinal {
            config.t_final = t;
        }
        if let Some(k) = self.modes {
            config.modes = Some(k);
        }
        if let Some(n) = self.deim_modes {
            config.deim_modes = Some(n);
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(dir) = &self.out {
            config.output_dir = dir.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn print_offline(summary: &OfflineSummary) {
    println!(
        "offline: {} snapshot columns, k = {}, n = {} interpolation points, {:.1} s",
        summary.snapshot_columns, summary.modes, summary.deim_modes, summary.offline_seconds
    );
    println!("artifacts in {}", summary.output_dir.display());
}

fn print_report(report: &BenchmarkReport) -> bool {
    println!(
        "online: k = {}, n = {}, ||(P'W)^-1||_2 = {:.1}",
        report.modes, report.deim_modes, report.deim_bound
    );
    println!(
        "{:>7}  {:>10}  {:>10}  {:>10}  {:>8}  {:>8}  {:>10}  {:>10}",
        "mu", "FOM [s]", "POD [s]", "DEIM [s]", "S_POD", "S_DEIM", "err POD", "err DEIM"
    );
    let mut ok = true;
    for case in &report.cases {
        match &case.outcome {
            CaseOutcome::Success(m) => println!(
                "{:>7}  {:>10.2}  {:>10.2}  {:>10.2}  {:>8.2}  {:>8.2}  {:>10.2e}  {:>10.2e}",
                case.mu,
                m.fom_seconds,
                m.pod_seconds,
                m.deim_seconds,
                m.s_pod,
                m.s_deim,
                m.pod_error,
                m.deim_error
            ),
            CaseOutcome::Failed(msg) => {
                ok = false;
                println!("{:>7}  failed: {msg}", case.mu);
            }
        }
    }
    ok
}

fn run() -> fhn_core::Result<bool> {
    match Cli::parse().command {
        Command::Offline(args) => {
            let config = args.resolve()?;
            let summary = run_offline(&config)?;
            print_offline(&summary);
            Ok(true)
        }
        Command::Online(args) => {
            let config = args.resolve()?;
            let report = run_online(&config)?;
            Ok(print_report(&report))
        }
        Command::Full(args) => {
            let config = args.resolve()?;
            let (summary, report) = run_full(&config)?;
            print_offline(&summary);
            Ok(print_report(&report))
        }
        Command::Check { refinements } => {
            let report = run_check(refinements)?;
            for item in &report.items {
                println!(
                    "{} {} ({})",
                    if item.passed { "PASS" } else { "FAIL" },
                    item.name,
                    item.detail
                );
            }
            Ok(report.all_passed())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
