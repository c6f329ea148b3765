//! `clp`: run, compare and check continual-learning experiments.
//!
//! Exit codes: 0 success, 1 usage, 2 data, 3 invariant failure.

mod commands;
mod config;
mod scripts;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use clp_core::harness::SyntheticSpec;
use clp_core::selftest::SelfTestOptions;

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Invariant(String),
    #[error(transparent)]
    Core(#[from] clp_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use clp_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::InvalidConfig(_)) => 1,
            CliError::Invariant(_)
            | CliError::Core(E::InvalidRate(_) | E::InvalidModulation(_) | E::DegenerateUpdate) => 3,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "clp", version, about = "Continual-learning prototype experiments")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment config over its seeds and write a run directory.
    Run {
        /// Experiment TOML, or the run.toml of an earlier run.
        config: PathBuf,
        /// Override a config value, e.g. `learner.params.theta=0.6`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Merge finished runs into one accuracy vs cost table.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        /// Where compare.csv and frontier.py go.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check the core invariants and print one line per property.
    Selftest {
        #[arg(long, default_value_t = SelfTestOptions::default().seed)]
        seed: u64,
        /// Scale the closed-form drift; only 1 passes.
        #[arg(long, default_value_t = 1.0, hide = true)]
        drift_constant: f64,
    },
    /// Write a synthetic stream as a feature file.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Synthetic spec TOML; the committed benchmark if absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override a spec value, e.g. `classes=4`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Store unit-norm features instead of raw ones.
        #[arg(long)]
        normalized: bool,
    },
}

fn synthetic_spec(path: Option<&PathBuf>, sets: &[String]) -> Result<SyntheticSpec, CliError> {
    // Reuse the experiment parser by nesting the spec under data.synthetic.
    let mut text = String::from("output_dir = \".\"\n[learner]\nkind = \"clp\"\n");
    let mut sets: Vec<String> = sets.iter().map(|s| format!("data.synthetic.{s}")).collect();
    if let Some(p) = path {
        let body = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        let table: toml::Table = body.parse().map_err(|e| CliError::Usage(format!("spec: {e}")))?;
        let mut pre: Vec<String> = table.iter().map(|(k, v)| format!("data.synthetic.{k}={v}")).collect();
        pre.append(&mut sets);
        sets = pre;
    }
    text.push_str("[data]\n");
    Ok(ExperimentConfig::parse(&text, &sets)?.data.synthetic)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, set } => {
            let cfg = ExperimentConfig::load(&config, &set)?;
            commands::cmd_run(&cfg).map(|_| ())
        }
        Command::Compare { runs, out } => commands::cmd_compare(&runs, &out).map(|_| ()),
        Command::Selftest { seed, drift_constant } => commands::cmd_selftest(&SelfTestOptions { drift_constant, seed }),
        Command::GenData { out, spec, set, normalized } => {
            let spec = synthetic_spec(spec.as_ref(), &set)?;
            commands::cmd_gen_data(&spec, &out, normalized)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
