//! `indicators`: step counting, activity and transport classification,
//! visit detection and user profiles from accelerometer and GPS files.
//!
//! Exit codes: 0 success, 1 data or algorithm error, 2 usage or config error.

mod commands;
mod config;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Config;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl From<indicators_core::Error> for Failure {
    fn from(e: indicators_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "indicators", version, about = "Individual-level behavioural indicators from accelerometer and GPS data")]
struct Cli {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set eps_m=25`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    Phone,
    Watch,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Count steps in an accelerometer CSV (`t,ax,ay,az`) → steps.json
    Steps {
        input: PathBuf,
        #[arg(long, value_enum)]
        device: Device,
        /// True step count; adds absolute and relative error.
        #[arg(long)]
        truth: Option<u64>,
    },
    /// Activity recognition on PAMAP2 `.dat` subject files.
    #[command(subcommand)]
    Activity(ActivityCmd),
    /// Detect visits in a location CSV (`t,lat,lon[,speed]`) → visits.csv
    Visits {
        input: PathBuf,
        /// Reference visits CSV; adds match.json.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Transport mode classification.
    #[command(subcommand)]
    Transport(TransportCmd),
    /// Profile of one user → profile.json, after_school.csv
    Profile { user_dir: PathBuf, poi: PathBuf },
    /// Write seeded synthetic inputs for the other commands.
    Synth {
        #[arg(value_enum)]
        kind: synth::Kind,
    },
}

#[derive(Subcommand, Debug)]
enum ActivityCmd {
    /// Train on every subject (activity_model.json), or one model per
    /// held-out subject with `--loso` (models/, confusion.csv, folds.json).
    Train {
        dataset_dir: PathBuf,
        #[arg(long)]
        loso: bool,
    },
    /// Score a saved model on labelled subjects → confusion.csv, eval.json
    Eval {
        dataset_dir: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Label an accelerometer CSV → activity_timeline.csv
    Classify {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum TransportCmd {
    /// Train from session directories (accel.csv + labels.csv, or an SHL
    /// slice) → transport_model.json, or per-fold models with `--loso`.
    Train {
        dataset_dir: PathBuf,
        #[arg(long)]
        loso: bool,
    },
    /// Label the trips of one session → trips.csv, and with labels.csv
    /// also per_class.csv and rollup.json.
    Run {
        session_dir: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = Config::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    let out = commands::Out::new(cli.out)?;
    out.write("config.toml", cfg.to_toml())?;
    match cli.command {
        Command::Steps { input, device, truth } => commands::steps(&cfg, &out, &input, device, truth),
        Command::Activity(ActivityCmd::Train { dataset_dir, loso }) => commands::activity_train(&cfg, &out, &dataset_dir, loso),
        Command::Activity(ActivityCmd::Eval { dataset_dir, model }) => commands::activity_eval(&cfg, &out, &dataset_dir, &model),
        Command::Activity(ActivityCmd::Classify { input, model }) => commands::activity_classify(&cfg, &out, &input, &model),
        Command::Visits { input, truth } => commands::visits(&cfg, &out, &input, truth.as_deref()),
        Command::Transport(TransportCmd::Train { dataset_dir, loso }) => commands::transport_train(&cfg, &out, &dataset_dir, loso),
        Command::Transport(TransportCmd::Run { session_dir, model }) => commands::transport_run(&cfg, &out, &session_dir, &model),
        Command::Profile { user_dir, poi } => commands::profile(&cfg, &out, &user_dir, &poi),
        Command::Synth { kind } => synth::write(&cfg, &out, kind),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
