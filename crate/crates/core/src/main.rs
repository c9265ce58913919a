use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use laco::experiments::{execute, preset, render_report, ExperimentConfig, PRESETS};
use laco::policy::PolicyKind;
use laco::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_INVALID_CONFIG: u8 = 3;
const EXIT_UNKNOWN_PRESET: u8 = 4;
const EXIT_OUTPUT: u8 = 5;

/// Latency-controlled RAN slicing simulator.
#[derive(Debug, Parser)]
#[command(name = "laco", version)]
struct Cli {
    /// Built-in scenario: chunk_size, counterphase, heatmap, regret_vs_slices, convergence.
    #[arg(long)]
    preset: Option<String>,
    /// TOML experiment file; its values override the preset's.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated policies (laco, ucb, ts, rr, oracle).
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<String>>,
    /// Replications per variant and policy.
    #[arg(long)]
    reps: Option<u32>,
    /// Seed of the first replication.
    #[arg(long)]
    seed: Option<u64>,
    /// Decision epochs per run.
    #[arg(long)]
    horizon: Option<u32>,
    /// Existing directory for traces and the summary.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent runs; defaults to one per core.
    #[arg(long)]
    workers: Option<usize>,
    /// Serve packets past their deadline instead of dropping them.
    #[arg(long)]
    serve_late: bool,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    dump_config: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnknownPreset(_) => EXIT_UNKNOWN_PRESET,
        Error::Io(_) => EXIT_OUTPUT,
        Error::InvalidConfig(_)
        | Error::NonDivisibleCapacity { .. }
        | Error::NoSlices
        | Error::EmptyMcsTable
        | Error::MalformedMcsTable { .. } => EXIT_INVALID_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.preset {
        Some(name) => preset(name)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        cfg = cfg.overlay(&text)?;
    }
    if let Some(list) = &cli.policy {
        cfg.policies = list.iter().map(|p| p.parse::<PolicyKind>()).collect::<Result<_, _>>()?;
    }
    if let Some(r) = cli.reps {
        cfg.replications = r;
    }
    if let Some(s) = cli.seed {
        cfg.seed_base = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(h) = cli.horizon {
        cfg.for_each_system(|s| s.horizon = h);
    }
    if cli.serve_late {
        cfg.for_each_system(|s| s.serve_late = true);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = resolve(cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let report = execute(&cfg, &out)?;
    let _ = write!(std::io::stdout(), "{}", render_report(&report));
    println!("\nwrote {} traces and summary.json to {}", report.runs.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::UnknownPreset(_) = e {
                eprintln!("known presets: {}", PRESETS.join(", "));
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
