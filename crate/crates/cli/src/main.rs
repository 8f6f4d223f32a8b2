use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dca_cli::commands::{generate_to, inspect, run, Failure, Runner};
use dca_cli::config::{Format, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "dca",
    version,
    about = "Dendritic Cell Algorithm anomaly detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the engine and write an MCAV report.
    Run(RunArgs),
    /// Run the reference oracle on the same inputs as `run`.
    Oracle(RunArgs),
    /// Write a scenario's signal, antigen and ground-truth files.
    Generate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for signals.csv, antigen.csv and truth.csv.
        #[arg(long, short = 'o', default_value = ".")]
        out_dir: PathBuf,
    },
    /// Pretty-print a report, highest MCAV first.
    Inspect { report: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Signal stream (`tick,metric_name,value` lines).
    #[arg(long)]
    signals: Option<PathBuf>,
    /// Antigen stream (`tick,antigen_type` lines).
    #[arg(long)]
    antigen: Option<PathBuf>,
    /// Read interleaved signal and antigen lines from stdin.
    #[arg(long)]
    stream: bool,
    /// Scenario spec to generate and run.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Seed for the engine and any generated scenario.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Anomaly threshold on MCAV, in [0, 1].
    #[arg(long)]
    threshold: Option<f64>,
    /// Pace ticks in wall-clock time (see `live.tick_interval_ms`).
    #[arg(long)]
    live: bool,
    /// Per-tick diagnostics CSV path.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

fn build_config(args: RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).map_err(Failure::config)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        signals: args.signals,
        antigen: args.antigen,
        stream: args.stream,
        scenario: args.scenario,
        seed: args.seed,
        out: args.out,
        format: args.format,
        threshold: args.threshold,
        live: args.live,
        diagnostics: args.diagnostics,
    });
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => {
            let cfg = build_config(args)?;
            run(&cfg, Runner::Engine, BufReader::new(std::io::stdin()))?;
        }
        Command::Oracle(args) => {
            let cfg = build_config(args)?;
            run(&cfg, Runner::Oracle, BufReader::new(std::io::stdin()))?;
        }
        Command::Generate {
            scenario,
            seed,
            out_dir,
        } => {
            for p in generate_to(&scenario, seed, &out_dir)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Inspect { report } => print!("{}", inspect(&report)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
