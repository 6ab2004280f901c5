//! Configuration-driven experiments: training runs, sample-size sweeps,
//! verification checks, oracle grids and report collation.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::verify::Check;
use config::{Overrides, RunConfig, OUT_ENV};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "vispinn", version, about = "Hölder-regularized PINN experiments")]
pub struct Cli {
    /// Flat TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Replaces the configured seed list with this single seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; takes precedence over VISPINN_OUT and the `out` key.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Omit wall-clock timings so outputs are byte-reproducible.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network per seed and write report, weights and history.
    Train,
    /// Train across the configured `m_r` values and seeds and fit the loss rate.
    Sweep,
    /// Run a verification check; exits 1 if it fails.
    Verify {
        #[arg(value_enum)]
        what: Check,
    },
    /// Write the reference solution grid for the configured operator.
    Oracle,
    /// Collate the training reports in the output directory into runs.csv.
    Report,
}

/// Loads the configuration named on the command line and applies the flag
/// and environment overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        deterministic: cli.deterministic,
    };
    let env_out = std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from);
    Ok(base.apply(&overrides, env_out))
}

/// Executes the command, printing progress lines to stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        // only fails if a pool already exists, in which case it is reused
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Train => {
            for (seed, report, files) in commands::train::cmd_train(&cfg)? {
                let s = &report.summary;
                println!(
                    "seed {seed}: pinn loss {:.3e}, regularized loss {:.3e}, best step {}",
                    s.final_pinn_loss, s.final_regularized_loss, s.best_step
                );
                for f in files {
                    println!("  wrote {}", f.display());
                }
            }
        }
        Command::Sweep => {
            let (result, files) = commands::sweep::cmd_sweep(&cfg)?;
            let s = &result.summary;
            match s.slope {
                Some(slope) => println!(
                    "median expected-loss slope {slope:.3} (reference rate {:.3})",
                    s.theoretical_rate
                ),
                None => println!("too few successful sample sizes for a slope"),
            }
            if s.failed_rows > 0 {
                println!("{} rows failed", s.failed_rows);
            }
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Verify { what } => {
            let (outcome, path) = commands::verify::cmd_verify(&cfg, *what)?;
            for line in &outcome.lines {
                println!("{line}");
            }
            println!("wrote {}", path.display());
            if !outcome.passed {
                return Err(CliError::Verification(format!("{} check", what.name())));
            }
        }
        Command::Oracle => {
            let (path, study) = commands::oracle::cmd_oracle(&cfg)?;
            if let Some(study) = study {
                println!(
                    "observed order {:.3} on grids {:?} (sup errors {:?})",
                    study.order, study.intervals, study.errors
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Report => {
            let (path, n) = commands::report::cmd_report(&cfg)?;
            println!("collated {n} reports into {}", path.display());
        }
    }
    Ok(())
}
