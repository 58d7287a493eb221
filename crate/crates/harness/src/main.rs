use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hermite_flow::config::{parse_config, Kind};
use hermite_flow::experiment::run_experiment_with_progress;
use hermite_flow::{Error, Result};

/// Simulator and analysis harness for teacher-student shallow-network
/// training: emergence times, scaling laws, and closed-form validation.
#[derive(Parser)]
#[command(name = "hermite-flow", version, about)]
struct Cli {
    #[command(subcommand)]
    kind: KindCmd,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON document).
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (falls back to HERMITE_FLOW_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Suppress `t=<t> loss=<loss>` progress lines on standard error.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum KindCmd {
    /// Oracle suite: finite differences, Monte Carlo, greedy brute force.
    #[command(name = "validate")]
    Validate(Common),
    /// Single-direction run against the idealized overlap ODE.
    #[command(name = "single_index", alias = "single-index")]
    SingleIndex(Common),
    /// Multi-direction emergence: detection, ordering, sharpness, norms.
    #[command(name = "emergence")]
    Emergence(Common),
    /// Loss-vs-time slope and width plateaus.
    #[command(name = "scaling")]
    Scaling(Common),
    /// Compute-optimal frontier over a width sweep.
    #[command(name = "compute_optimal", alias = "compute-optimal")]
    ComputeOptimal(Common),
    /// Initialization gap statistics.
    #[command(name = "init_gaps", alias = "init-gaps")]
    InitGaps(Common),
}

impl KindCmd {
    fn split(self) -> (Kind, Common) {
        match self {
            KindCmd::Validate(c) => (Kind::Validate, c),
            KindCmd::SingleIndex(c) => (Kind::SingleIndex, c),
            KindCmd::Emergence(c) => (Kind::Emergence, c),
            KindCmd::Scaling(c) => (Kind::Scaling, c),
            KindCmd::ComputeOptimal(c) => (Kind::ComputeOptimal, c),
            KindCmd::InitGaps(c) => (Kind::InitGaps, c),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = cli.kind.split();
    match execute(kind, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(kind: Kind, common: Common) -> Result<bool> {
    let threads = common.threads.or_else(|| {
        std::env::var("HERMITE_FLOW_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut spec = parse_config(&common.config)?;
    if spec.kind != kind {
        return Err(Error::Config(format!(
            "config kind \"{}\" does not match subcommand \"{}\"",
            spec.kind.name(),
            kind.name()
        )));
    }
    if let Some(out) = common.out {
        spec.output_dir = out;
    }
    if let Some(seed) = common.seed {
        spec.base.seed = seed;
    }
    spec.validate()?;
    let report = run_experiment_with_progress(&spec, !common.quiet)?;
    for criterion in &report.criteria {
        println!("{}", criterion.summary_line());
    }
    println!(
        "{}: {} ({} criteria, {:.1}s)",
        spec.kind.name(),
        if report.passed { "PASS" } else { "FAIL" },
        report.criteria.len(),
        report.runtime_secs
    );
    Ok(report.passed)
}
