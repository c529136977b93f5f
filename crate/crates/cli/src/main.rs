//! `strobo`: runs one experiment from a JSON config and writes
//! `<experiment>.csv` plus `<experiment>.meta.json` into the output
//! directory.
//!
//! Exit codes: 0 on success, 1 when a run failed, 2 on a configuration
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use strobo::harness::{run_experiment, Experiment, ExperimentConfig, RunOptions};
use strobo::Error;

#[derive(Parser, Debug)]
#[command(name = "strobo", version, about = "Stroboscopic averaging experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// SAM error against macro and micro step.
    Accuracy(RunArgs),
    /// Plain splitting error table.
    Table(RunArgs),
    /// Error against work for SAM and splitting.
    Efficiency(RunArgs),
    /// Long-time mass and energy errors.
    Invariants(RunArgs),
    /// Mode magnitudes along splitting, SAM and FAM trajectories.
    Modes(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Use the published grid sizes and reference policy.
    #[arg(long)]
    paper_scale: bool,
    /// Reference cache directory; STROBO_CACHE_DIR takes precedence.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Recompute references without touching the cache.
    #[arg(long)]
    no_cache: bool,
}

impl Command {
    fn parts(&self) -> (Experiment, &RunArgs) {
        match self {
            Command::Accuracy(a) => (Experiment::AccuracySweep, a),
            Command::Table(a) => (Experiment::SplittingTable, a),
            Command::Efficiency(a) => (Experiment::Efficiency, a),
            Command::Invariants(a) => (Experiment::InvariantsLongTime, a),
            Command::Modes(a) => (Experiment::ModeEvolution, a),
        }
    }
}

enum Outcome {
    Ok,
    RunFailed,
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(c.downcast_ref::<Error>(), Some(Error::Config(_) | Error::Cfl { .. } | Error::Json(_)))
    })
}

fn execute(cli: Cli) -> anyhow::Result<Outcome> {
    let (experiment, args) = cli.command.parts();
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if cfg.experiment != experiment {
        return Err(Error::Config(format!(
            "config describes {:?}, not {:?}",
            cfg.experiment, experiment
        ))
        .into());
    }
    cfg.paper_scale |= args.paper_scale;
    if args.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()).into());
    }
    let opts = RunOptions {
        threads: args.threads,
        cache_dir: args.cache_dir.clone(),
        no_cache: args.no_cache,
    };
    let report = run_experiment(&cfg, &opts)?;
    let path = report
        .write_to_dir(&args.out)
        .with_context(|| format!("writing results to {}", args.out.display()))?;
    eprintln!(
        "wrote {} ({} runs, {:.1} s)",
        path.display(),
        report.records.len(),
        report.wall_time_s
    );
    if report.is_success() {
        Ok(Outcome::Ok)
    } else {
        for f in &report.failures {
            eprintln!("run failed: eps={} {}: {}", f.eps, f.run, f.message);
        }
        Ok(Outcome::RunFailed)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::RunFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
