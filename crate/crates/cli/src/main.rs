//! `qcd`: quickest change detection experiments for finite-state Markov
//! chains.
//!
//! Subcommands: `validate`, `simulate`, `filter`, `risk`, `study`. Every
//! command is a pure function of (config, seed): outputs carry a metadata
//! line with the config hash and seed, and replays are byte-identical.
//! `QCD_THREADS` caps Monte Carlo parallelism.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::Overrides;
use qcd_core::FilterMode;

/// Exit 1 for invalid configs/models, 2 for runtime failures.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(msg) | CliError::Runtime(msg) => msg,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "qcd",
    version,
    about = "Bayesian quickest change detection for finite-state Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Scalar,
    Full,
    Both,
}

impl From<ModeArg> for FilterMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Scalar => FilterMode::Scalar,
            ModeArg::Full => FilterMode::Full,
            ModeArg::Both => FilterMode::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a config: model checks plus structure and separation reports.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Accept chains that fail the irreducible/aperiodic check.
        #[arg(long)]
        allow_nonergodic: bool,
    },
    /// Simulate one trajectory and write it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's horizon.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        allow_nonergodic: bool,
    },
    /// Run the posterior filter over a stored trajectory.
    Filter {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory CSV produced by `simulate`.
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Scalar)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        allow_nonergodic: bool,
    },
    /// Monte Carlo Bayes risk, one CSV row per threshold.
    Risk {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated threshold list (default: the config threshold).
        #[arg(long)]
        thresholds: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// No-change trap-frequency study over the configured family grid.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate {
            config,
            allow_nonergodic,
        } => commands::validate(&config, allow_nonergodic),
        Command::Simulate {
            config,
            out,
            seed,
            horizon,
            allow_nonergodic,
        } => commands::simulate(
            &config,
            &out,
            allow_nonergodic,
            Overrides {
                seed,
                horizon,
                trials: None,
            },
        ),
        Command::Filter {
            config,
            trajectory,
            mode,
            out,
            allow_nonergodic,
        } => commands::filter(
            &config,
            &trajectory,
            mode.into(),
            &out,
            allow_nonergodic,
            Overrides::default(),
        ),
        Command::Risk {
            config,
            out,
            thresholds,
            seed,
            trials,
            horizon,
        } => commands::risk(
            &config,
            &out,
            thresholds.as_deref(),
            Overrides {
                seed,
                trials,
                horizon,
            },
        ),
        Command::Study {
            config,
            out,
            seed,
            trials,
            horizon,
        } => commands::study(
            &config,
            &out,
            Overrides {
                seed,
                trials,
                horizon,
            },
        ),
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match std::env::var("QCD_THREADS") {
        Ok(text) => {
            let threads: usize = text
                .parse()
                .map_err(|_| CliError::Invalid(format!("QCD_THREADS: cannot parse \"{text}\"")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(command))
        }
        Err(_) => dispatch(command),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {}", error.message());
            ExitCode::from(error.code())
        }
    }
}
