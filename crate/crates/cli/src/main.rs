//! `ratesv`: runs the rate-invariant speaker verification pipeline stage by
//! stage from one experiment file.

mod config;
mod stages;
mod stamp;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ratesv::trainer::SystemPreset;

use config::FileConfig;
use stages::Context;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("stage `{stage}` {why}; run `ratesv {command}` first")]
    MissingStage {
        stage: String,
        command: String,
        why: String,
    },
    #[error("{0}")]
    Data(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("training of `{system}` diverged at step {step}: {reason}")]
    Diverged {
        system: String,
        step: usize,
        reason: String,
    },
    #[error(transparent)]
    Core(#[from] ratesv::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 usage or config, 2 data, 3 numerical.
    fn exit_code(&self) -> u8 {
        use ratesv::Error as E;
        match self {
            CliError::Config(_) => 1,
            CliError::MissingStage { .. } | CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Diverged { .. } => 3,
            CliError::Core(e) => match e {
                E::Config(_) | E::Argument(_) | E::AlphaOutOfRange { .. } => 1,
                E::Numerical(_) => 3,
                _ => 2,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ratesv", version, about = "Rate-invariant speaker verification pipeline")]
struct Cli {
    /// Experiment file (TOML). Without one the built-in defaults are used.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding every stage's outputs.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded numerics (the only mode at present; accepted for
    /// scripts that pass it explicitly).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Rerun stages even when their outputs are current.
    #[arg(long, global = true)]
    force: bool,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Systems {
    /// Restrict to these systems (name or id); defaults to all configured.
    #[arg(long = "system", value_name = "PRESET")]
    systems: Vec<SystemPreset>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize the toy corpus and its manifests.
    Synth,
    /// Time-stretch training and test audio.
    Augment,
    /// Extract MFCC features into an archive.
    Featurize,
    /// Train one model per system.
    Train(Systems),
    /// Write embeddings with trained models.
    Extract(Systems),
    /// Score every test condition.
    Score(Systems),
    /// Write the EER table (text and SVG) and print it.
    Report,
    /// Every stage in order.
    Run,
    /// Print the effective config as TOML.
    Config,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut ctx = Context::new(file, cli.workdir, cli.seed)?;
    ctx.force = cli.force;
    if cli.deterministic {
        log::info!("deterministic mode: single-threaded numerics");
    }
    match cli.command {
        Command::Synth => {
            ctx.synth()?;
        }
        Command::Augment => {
            ctx.augment()?;
        }
        Command::Featurize => {
            ctx.featurize()?;
        }
        Command::Train(s) => {
            for p in ctx.systems(&s.systems)? {
                ctx.train(p)?;
            }
        }
        Command::Extract(s) => {
            for p in ctx.systems(&s.systems)? {
                ctx.extract(p)?;
            }
        }
        Command::Score(s) => {
            for p in ctx.systems(&s.systems)? {
                ctx.score(p)?;
            }
        }
        Command::Report => print!("{}", ctx.report()?),
        Command::Run => print!("{}", ctx.run_all()?),
        Command::Config => print!("{}", ctx.file.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
