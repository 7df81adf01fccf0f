//! `eat`: augmentation preview, training, evaluation, latency benchmarks and
//! phase/magnitude resynthesis.
//!
//! Exit status: 0 on success, 2 when an input or configuration is invalid,
//! 1 when reading or writing a file fails or a run breaks down midway.

mod augment;
mod bench;
mod eval;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use eat_core::config::RunConfig;
use eat_core::model::EatConfig;
use eat_core::parallel::Execution;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self { code: 1, msg: msg.into() }
    }
}

impl From<eat_core::Error> for Failure {
    fn from(e: eat_core::Error) -> Self {
        use eat_core::Error as E;
        let code = match &e {
            e if e.is_io() => 1,
            E::Wav(_) | E::Checkpoint(_) | E::NonFiniteLoss | E::NonFiniteGradient(_) | E::ZeroNormalization(_) => 1,
            _ => 2,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Model presets usable as the base layer of the configuration.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    EatS,
    EatM,
    Toy,
    Tiny,
}

impl Preset {
    fn model(self) -> EatConfig {
        match self {
            Preset::EatS => EatConfig::eat_s(50),
            Preset::EatM => EatConfig::eat_m(50),
            Preset::Toy => EatConfig::toy(3),
            Preset::Tiny => EatConfig::tiny(3),
        }
    }
}

/// Options shared by every command that reads a run configuration.
#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model preset applied below the configuration file.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// `section.key=value` override, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> CliResult<RunConfig> {
        let base = RunConfig { model: self.preset.map_or_else(EatConfig::default, Preset::model), ..RunConfig::default() };
        if let Some(p) = &self.config {
            if !p.exists() {
                return Err(Failure::io(format!("config file {} not found", p.display())));
            }
        }
        Ok(RunConfig::load(&base, self.config.as_deref(), &self.overrides)?)
    }
}

#[derive(Debug, Parser)]
#[command(name = "eat", version, about = "Raw-waveform audio classification toolkit")]
struct Cli {
    /// Worker threads for data-parallel work; 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply transforms, noise or a mixing strategy to WAV files.
    Augment(augment::Args),
    /// Train with k-fold cross-validation and write checkpoints and metrics.
    Train(train::Args),
    /// Evaluate a checkpoint on a manifest.
    Eval(eval::Args),
    /// Forward-pass latency per input duration, as CSV.
    Bench(bench::Args),
    /// Phase-only or magnitude-only resynthesis of a WAV file.
    Synth(synth::Args),
}

fn execution(threads: Option<usize>) -> CliResult<Execution> {
    match threads {
        Some(0) => Err(Failure::invalid("--threads must be at least 1")),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::io(format!("thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        _ => Ok(Execution::Parallel),
    }
}

fn run(cli: Cli) -> CliResult {
    let exec = execution(cli.threads)?;
    match cli.command {
        Command::Augment(a) => augment::run(a),
        Command::Train(a) => train::run(a, exec),
        Command::Eval(a) => eval::run(a, exec),
        Command::Bench(a) => bench::run(a),
        Command::Synth(a) => synth::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
