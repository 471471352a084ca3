//! `mfbvar`: batch front end for simulation, estimation, nowcasting,
//! evaluation, connectedness and cycle dating.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{execute, hash_inputs, plan, Command};
use error::CliError;
use manifest::{sha256_file, unix_now, FileHash, OutputDir, RunManifest, ERROR_RECORD, MANIFEST};

#[derive(Parser)]
#[command(name = "mfbvar", version, about = "Mixed-frequency Bayesian VAR toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a synthetic state/national panel with known monthly truth.
    Simulate(RunArgs),
    /// Estimate the model and dump posterior draws.
    Estimate(RunArgs),
    /// Estimate and produce predictive distributions for target quarters.
    Nowcast(RunArgs),
    /// Run a recursive pseudo-real-time forecast evaluation.
    Evaluate(RunArgs),
    /// Posterior-mean connectedness tables.
    Connectedness(RunArgs),
    /// Date peaks and troughs of monthly growth paths.
    DateCycles(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; all available cores by default.
    #[arg(long)]
    threads: Option<usize>,
    /// Validate and print the resolved plan without computing.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Estimate(a) => (Command::Estimate, a),
        Cmd::Nowcast(a) => (Command::Nowcast, a),
        Cmd::Evaluate(a) => (Command::Evaluate, a),
        Cmd::Connectedness(a) => (Command::Connectedness, a),
        Cmd::DateCycles(a) => (Command::DateCycles, a),
    };
    match run(command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = e.record(command.name());
            let text = serde_json::to_string(&record).expect("error record serializes");
            eprintln!("{text}");
            if !args.dry_run && std::fs::create_dir_all(&args.out).is_ok() {
                let _ = std::fs::remove_file(args.out.join(MANIFEST));
                let _ = std::fs::write(args.out.join(ERROR_RECORD), text + "\n");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command, args: &RunArgs) -> Result<(), CliError> {
    let started = unix_now();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let threads = rayon::current_num_threads();
    let plan = plan(command, &args.config, args.seed)?;
    if args.dry_run {
        let summary = plan.summary(&args.out, threads)?;
        println!("{}", serde_json::to_string_pretty(&summary).expect("plan serializes"));
        return Ok(());
    }
    let manifest = RunManifest {
        command: command.name().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: plan.seed,
        threads,
        config: FileHash {
            path: display(&args.config),
            sha256: sha256_file(&args.config)?,
        },
        resolved_config: plan.resolved.clone(),
        inputs: hash_inputs(&plan.inputs)?,
        outputs: Vec::new(),
        started_unix: started,
        finished_unix: 0.0,
    };
    eprintln!("[{}] seed {} on {threads} threads", command.name(), plan.seed);
    let mut out = OutputDir::create(&args.out)?;
    execute(plan, &mut out)?;
    out.finish(manifest)?;
    eprintln!("[{}] done; outputs in {}", command.name(), args.out.display());
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
