use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use monodromy_cli::{exit_status, run_job, CliError, JobConfig, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "monodromy", version, about = "Period lattices, monodromy and Maslov indices of integrable systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the job described by a JSON config.
    Run {
        config: PathBuf,
        /// Overrides the config's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Log progress to stderr.
        #[arg(long)]
        verbose: bool,
    },
}

fn run(config: &PathBuf, seed: Option<u64>) -> anyhow::Result<u8> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = JobConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let t0 = Instant::now();
    let report = run_job(&cfg)?;
    let json = report.to_json();
    match &cfg.output.report {
        Some(path) => fs::write(path, &json).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => print!("{json}"),
    }
    let status = exit_status(&report);
    eprintln!(
        "{}: {} in {:.2}s",
        cfg.job.name(),
        if status == 0 { "pass" } else { "fail" },
        t0.elapsed().as_secs_f64()
    );
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { config, seed, verbose } = cli.command;
    let level = if verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&config, seed) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
