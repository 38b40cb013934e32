use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcaddreach::conformal::ConformalError;
use pcaddreach::pipeline::{
    read_json, run_timed, Artifacts, Comparison, CoverageReport, Phase, PipelineError, RunConfig,
};
use pcaddreach::reach::ReachError;

#[derive(Parser)]
#[command(name = "pcaddreach", version, about = "δ-confident flowpipes for stochastic black-box systems")]
struct Cli {
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, env = "PCADDREACH_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate training and calibration datasets.
    Simulate(Common),
    /// Train the per-segment surrogates.
    Train(Common),
    /// Compute the surrogate flowpipe.
    Reach(Common),
    /// Fit the error model and calibrate the conformal quantile.
    Calibrate(Common),
    /// Build the confident flowpipe from the inflating hypercubes.
    Inflate(Common),
    /// Estimate coverage on fresh deployment trajectories.
    Validate(Common),
    /// Export per-step bounds and the run summary.
    Report(Common),
    /// Compare PCA and baseline inflation.
    Compare(Common),
    /// Chain every phase, or only the one given by `--phase`.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        phase: Option<String>,
    },
    /// Validate a configuration file without running anything.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn exit_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Config(_) => 2,
        PipelineError::MissingArtifact { .. } => 3,
        PipelineError::Conformal(ConformalError::InfeasibleCalibration { .. }) => 4,
        PipelineError::Reach(ReachError::TooManyStars { .. }) => 5,
        _ => 1,
    }
}

fn category(e: &PipelineError) -> &'static str {
    match exit_code(e) {
        2 => "config error",
        3 => "missing artifact",
        4 => "calibration error",
        5 => "reachability error",
        _ => "error",
    }
}

fn summarize(phase: Phase, art: &Artifacts, secs: f64) -> Result<(), PipelineError> {
    match phase {
        Phase::Validate => {
            let r: CoverageReport = read_json(&art.coverage())?;
            println!(
                "validate: coverage {:.4} ({}/{}) for δ={}, τ={} [{secs:.2}s]",
                r.coverage, r.hits, r.trials, r.delta, r.tau
            );
        }
        Phase::Compare => {
            let c: Comparison = read_json(&art.comparison())?;
            println!(
                "compare: log-volume PCA {:.4} vs baseline {:.4} (ratio {:.4e}); coverage {:.4} vs {:.4} [{secs:.2}s]",
                c.pca.log_volume, c.baseline.log_volume, c.volume_ratio, c.pca.coverage, c.baseline.coverage
            );
        }
        _ => println!("{phase}: done [{secs:.2}s]"),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let (common, phases) = match cli.command {
        Command::Check { config } => {
            RunConfig::load(&config)?;
            println!("{}: ok", config.display());
            return Ok(());
        }
        Command::Simulate(c) => (c, vec![Phase::Simulate]),
        Command::Train(c) => (c, vec![Phase::Train]),
        Command::Reach(c) => (c, vec![Phase::Reach]),
        Command::Calibrate(c) => (c, vec![Phase::Calibrate]),
        Command::Inflate(c) => (c, vec![Phase::Inflate]),
        Command::Validate(c) => (c, vec![Phase::Validate]),
        Command::Report(c) => (c, vec![Phase::Report]),
        Command::Compare(c) => (c, vec![Phase::Compare]),
        Command::Run { common, phase } => {
            let phases = match phase {
                Some(p) => vec![p.parse()?],
                None => Phase::RUN.to_vec(),
            };
            (common, phases)
        }
    };
    let cfg = RunConfig::load(&common.config)?;
    let art = Artifacts::new(common.out);
    for phase in phases {
        let secs = run_timed(&cfg, phase, &art)?;
        summarize(phase, &art, secs)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::FAILURE;
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", category(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
