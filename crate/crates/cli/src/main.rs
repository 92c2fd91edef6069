//! `phca` command-line entry point.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// A failure reported as one `Class: message` line on stderr.
#[derive(Debug)]
pub struct Failure {
    pub class: &'static str,
    pub message: String,
    pub code: u8,
}

impl Failure {
    pub fn schema(message: impl Into<String>) -> Failure {
        Failure {
            class: "SchemaError",
            message: message.into(),
            code: 2,
        }
    }

    pub fn config(message: impl Into<String>) -> Failure {
        Failure {
            class: "ConfigError",
            message: message.into(),
            code: 2,
        }
    }
}

impl From<phca::Error> for Failure {
    fn from(e: phca::Error) -> Failure {
        Failure {
            class: e.class(),
            code: if e.is_input_error() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "phca", version, about = "Probabilistic hosting-capacity batches by critical-region reuse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the whole parameter set and write the reports.
    Run(RunArgs),
    /// Compare the linear voltage and quadratic loss models with AC power flow.
    Validate(ValidateArgs),
    /// Re-aggregate the statistics of an existing batch.
    Stats(StatsArgs),
    /// Print the parametric problem matrices.
    DumpProblem(DumpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Random,
    Sequential,
}

#[derive(Args)]
struct InputArgs {
    /// Run manifest (TOML); the flags below override its entries.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    feeder: Option<PathBuf>,
    #[arg(long)]
    load: Option<PathBuf>,
    #[arg(long)]
    solar: Option<PathBuf>,
    /// Builder configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Penetration levels, `a:step:b` or a comma list.
    #[arg(long)]
    penetrations: Option<String>,
    /// Injection scalings, `a:step:b` or a comma list.
    #[arg(long)]
    scalings: Option<String>,
    /// Inverter oversize factors, `a:step:b` or a comma list.
    #[arg(long)]
    oversize: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    sampling: Option<SamplingArg>,
    /// Stop exploring regions after this many (0 = never).
    #[arg(long)]
    early_stop: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Re-solve this fraction of the batch directly and report deviations.
    #[arg(long)]
    validate: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    width: Option<usize>,
    /// Restrict statistics to an hour window `a:b`.
    #[arg(long)]
    hours: Option<String>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// `batch.json` written by `run`.
    #[arg(long)]
    batch: PathBuf,
    #[arg(long)]
    hours: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Scenario hour used as base injections (default: peak load hour).
    #[arg(long)]
    hour: Option<usize>,
    #[arg(long, default_value = "1,0.5,0.25")]
    scales: String,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    feeder: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dump the scaled problem instead of the original one.
    #[arg(long)]
    scaled: bool,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Validate(a) => commands::validate(a),
        Command::Stats(a) => commands::stats(a),
        Command::DumpProblem(a) => commands::dump_problem(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}: {}", f.class, f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let num: Failure = phca::Error::Numerical("singular".into()).into();
        assert_eq!((num.class, num.code), ("NumericalFailure", 3));
        let schema: Failure = phca::Error::Feeder(phca::error::FeederError::Schema("x".into())).into();
        assert_eq!((schema.class, schema.code), ("SchemaError", 2));
    }
}
