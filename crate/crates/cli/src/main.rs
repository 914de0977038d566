mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AntennaArgs, LutArgs, SimulateArgs, TrainArgs, WwbArgs};

#[derive(Debug, Parser)]
#[command(name = "wwb-adapt", version, about = "Bound-driven adaptive sensing experiments")]
struct Cli {
    /// Worker threads (defaults to the available cores).
    #[arg(long, global = true, env = "WWB_ADAPT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a table of optimal scalings over (variance, SNR).
    Lut(LutArgs),
    /// Optimized bound versus scaling, as CSV.
    Wwb(WwbArgs),
    /// Monte Carlo closed-loop runs into a run directory.
    Simulate(SimulateArgs),
    /// Antenna selections over a variance grid.
    Antenna(AntennaArgs),
    /// Generate the antenna dataset and fit the surrogate network.
    TrainSurrogate(TrainArgs),
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) | CliError::Io(m) => m,
        }
    }
}

impl From<wwb_adapt::Error> for CliError {
    fn from(e: wwb_adapt::Error) -> Self {
        use wwb_adapt::Error as E;
        let msg = e.to_string();
        match e {
            E::Io { .. } => CliError::Io(msg),
            E::Numeric(_) | E::NoValidTestPoint(_) => CliError::Numeric(msg),
            _ => CliError::Config(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn report(e: &CliError) -> ExitCode {
    let msg = e.message().replace(['\n', '\r'], " ");
    eprintln!("error kind={} code={} message={:?}", e.kind(), e.code(), msg);
    ExitCode::from(e.code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            return report(&CliError::Config(first.trim_start_matches("error: ").to_string()));
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return report(&CliError::Config("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report(&CliError::Config(format!("thread pool: {e}")));
        }
    }
    let res = match &cli.command {
        Command::Lut(a) => commands::cmd_lut(a, cli.threads),
        Command::Wwb(a) => commands::cmd_wwb(a, cli.threads),
        Command::Simulate(a) => commands::cmd_simulate(a, cli.threads),
        Command::Antenna(a) => commands::cmd_antenna(a, cli.threads),
        Command::TrainSurrogate(a) => commands::cmd_train_surrogate(a, cli.threads),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
