//! Command-line front end for the `superhet` library.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod units;

use clap::Parser;
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use commands::Command;
use config::{load_tree, Format, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "superhet", version, about = "Rydberg superheterodyne receiver simulator")]
pub struct Cli {
    /// TOML configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set drive.delta_s="2 MHz"
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Output file; a <path>.meta.json sidecar is written beside it
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    /// Random seed (oracle-check)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    /// Config file plus `--set`, with the dedicated flags applied last.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut sets = self.set.clone();
        if let Some(p) = &self.output {
            let p = p.to_str().ok_or_else(|| CliError::config("output path is not valid UTF-8"))?;
            sets.push(format!("output.path={}", toml::Value::String(p.to_string())));
        }
        if let Some(f) = self.format {
            sets.push(format!("output.format=\"{}\"", if f == Format::Csv { "csv" } else { "json" }));
        }
        if let Some(seed) = self.seed {
            sets.push(format!("task.seed={seed}"));
        }
        let tree = load_tree(self.config.as_deref(), &sets)?;
        RunConfig::from_tree(tree, self.command.grid_default())
    }
}

/// Runs one invocation and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("superhet {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let config = cli.resolve()?;
    let start = Instant::now();
    let outcome = cli.command.execute(&config)?;
    let elapsed = start.elapsed().as_secs_f64();
    match &config.output.path {
        Some(path) => output::write_outputs(path.as_ref(), cli.command.name(), &config, &outcome, elapsed)?,
        None => print!("{}", output::render(cli.command.name(), &outcome, config.output.format)),
    }
    if let Some(msg) = &outcome.failure {
        eprintln!("superhet {}: {msg}", cli.command.name());
        return Ok(3);
    }
    Ok(0)
}

/// Parses `args` (including the program name) and runs.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}
