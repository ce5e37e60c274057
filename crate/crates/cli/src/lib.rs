//! The `fet` command-line tool: in-process simulation, distributed
//! master/client training over TCP, prediction, evaluation, and parameter
//! sweeps.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::SweepAxis;
pub use config::{Overrides, RunConfig};
pub use error::{CliError, EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_PROTOCOL};

/// Environment variable holding the log filter (e.g. `debug`, `fet_core=trace`).
pub const LOG_ENV: &str = "FET_LOG";

#[derive(Debug, Parser)]
#[command(name = "fet", version, about = "Federated extremely randomized trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train with in-process clients, evaluate on a held-out split, and write
    /// model.json, report.json and report.txt.
    Simulate(Overrides),
    /// Coordinate a session with clients connecting over TCP.
    Master(Overrides),
    /// Join a master's session with a local data shard.
    Client(Overrides),
    /// Write per-client train shards and the test split as `simulate` deals them.
    Shard(Overrides),
    /// Repeat the experiment across values of one setting; writes sweep-<axis>.csv.
    Sweep(SweepArgs),
    /// Predict one class name per row of a CSV.
    Predict(ModelArgs),
    /// Score a saved model on a labelled CSV.
    Eval(ModelArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long, value_enum)]
    pub axis: SweepAxis,
    /// Comma-separated values, e.g. 1,5,10,20.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file written by a training command.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// CSV with a header row naming the model's features; one extra column is
    /// read as the label.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// `predict`: output file (default stdout); `eval`: report directory.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Run configuration supplying `ignore_columns`, `f1_mode` and `log_level`.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

fn init_logging(default_level: &str) {
    let env = env_logger::Env::new().filter_or(LOG_ENV, default_level);
    // A second initialization (tests calling `run` repeatedly) is harmless.
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn training_config(o: &Overrides) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::resolve(o)?;
    init_logging(&cfg.log_level);
    cfg.validate()?;
    Ok(cfg)
}

fn model_config(a: &ModelArgs) -> Result<RunConfig, CliError> {
    let cfg = match &a.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    init_logging(&cfg.log_level);
    Ok(cfg)
}

/// Executes a parsed command.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(o) => commands::simulate(&training_config(&o)?),
        Command::Master(o) => commands::master(&training_config(&o)?),
        Command::Client(o) => commands::client(&training_config(&o)?),
        Command::Shard(o) => commands::shard(&training_config(&o)?),
        Command::Sweep(s) => commands::sweep(&training_config(&s.overrides)?, s.axis, &s.values),
        Command::Predict(a) => {
            let cfg = model_config(&a)?;
            commands::predict(&a.model, &a.data, a.out.as_deref(), &cfg.ignore_columns)
        }
        Command::Eval(a) => {
            let cfg = model_config(&a)?;
            commands::eval(&a.model, &a.data, a.out.as_deref(), &cfg.ignore_columns, &cfg)
        }
    }
}

/// Parses `args` (including the program name), runs the command, reports any
/// error on stderr, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("fet: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_into_overrides() {
        let cli = Cli::try_parse_from([
            "fet", "simulate", "--privacy", "ldp", "--trees", "3", "--max-depth", "4", "--clients", "5", "--seed", "9",
            "--epsilon-node", "0.5", "--repeats", "2", "--out", "o", "--data", "d.csv",
        ])
        .unwrap();
        let Command::Simulate(o) = cli.command else { panic!("wrong command") };
        let mut cfg = RunConfig::default();
        cfg.apply(&o);
        assert_eq!(cfg.session.privacy, fet_core::PrivacyMode::Ldp);
        assert_eq!((cfg.session.trees, cfg.session.max_depth, cfg.session.clients), (3, 4, 5));
        assert_eq!((cfg.session.seed, cfg.session.epsilon_node, cfg.repeats), (9, 0.5, 2));
        assert_eq!(cfg.out, PathBuf::from("o"));
        assert_eq!(cfg.data, Some(PathBuf::from("d.csv")));
    }

    #[test]
    fn sweep_values_are_comma_separated() {
        let cli = Cli::try_parse_from(["fet", "sweep", "--axis", "depth", "--values", "1,5,20"]).unwrap();
        let Command::Sweep(s) = cli.command else { panic!("wrong command") };
        assert_eq!(s.axis, SweepAxis::Depth);
        assert_eq!(s.values, vec![1, 5, 20]);
    }

    #[test]
    fn usage_errors_exit_with_the_config_code() {
        assert_eq!(run(["fet", "simulate", "--privacy", "maybe"]), EXIT_CONFIG);
        assert_eq!(run(["fet", "launch"]), EXIT_CONFIG);
        assert_eq!(run(["fet", "--help"]), EXIT_OK);
    }
}
