use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use qfi_experiment::{report, run, sweep, ExperimentConfig, ExperimentError, RunOptions};

#[derive(Parser)]
#[command(name = "qfi", version, about = "Quantum Fisher information experiments")]
struct Cli {
    /// Worker threads; defaults to $QFI_WORKERS or the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config, or re-run the config recorded in a manifest.
    Run {
        config: PathBuf,
        /// Write the manifest only.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run once per value of the [sweep] axis and summarize.
    Sweep { config: PathBuf },
    /// Parse and validate a config, printing the resolved form.
    Validate { config: PathBuf },
    /// Summarize a finished run directory.
    Report { run_dir: PathBuf },
}

fn options(cli_workers: Option<usize>, dry_run: bool) -> Result<RunOptions, ExperimentError> {
    let workers = match cli_workers {
        Some(0) => {
            return Err(ExperimentError::Config { field: "--workers".into(), message: "must be at least 1".into() })
        }
        Some(w) => w,
        None => qfi_experiment::runner::default_workers()?,
    };
    Ok(RunOptions { workers, dry_run })
}

fn execute(cli: Cli) -> Result<i32, ExperimentError> {
    match cli.command {
        Command::Run { config, dry_run } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = run(&cfg, &options(cli.workers, dry_run)?)?;
            let m = &out.manifest;
            println!(
                "{}: {} ok, {} failed, output in {}",
                cfg.scenario.name(),
                m.n_ok,
                m.n_failed,
                out.dir.display()
            );
            Ok(out.exit_code())
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = sweep(&cfg, &options(cli.workers, false)?)?;
            print!("{}", out.report);
            println!("summary in {}", out.dir.join("summary.csv").display());
            Ok(out.exit_code())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", cfg.to_toml()?);
            Ok(0)
        }
        Command::Report { run_dir } => {
            print!("{}", report(&run_dir)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli).context("qfi") {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e.downcast_ref::<ExperimentError>().is_some_and(ExperimentError::is_config);
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}
