//! Command-line front end.
//!
//! ```text
//! actorlab <check-grad|kl-example|variance|mixture-sweep|optimize> [--config FILE] [--seed N] [--out DIR]
//! ```
//!
//! Settings resolve as flags, then the config file, then per-command defaults.
//! Exit codes: 0 success, 1 experiment failure (divergence, tolerance breach,
//! unsupported estimator), 2 usage or config error.

mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use commands::{AGREEMENT_SIGMAS, KL_EXAMPLE_TOL, SCALING_TOL};
use config::ConfigFile;

#[derive(Debug)]
pub(crate) enum Failure {
    Usage(String),
    Runtime(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "actorlab",
    version,
    about = "Soft actor-critic actor-loss gradient laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare every analytic derivative against central finite differences.
    CheckGrad(Common),
    /// Gradient descent on KL(h || N(phi, 1)) for the +/-2 bimodal target.
    KlExample(Common),
    /// Replicated variance study of both gradient estimators.
    Variance(Common),
    /// Fit K-component mixtures to a log-mixture target for each K.
    MixtureSweep(Common),
    /// Plain batch-gradient descent on the actor loss.
    Optimize(Common),
}

fn load(path: Option<&Path>) -> Result<ConfigFile, Failure> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    ConfigFile::parse(&text).map_err(|e| Failure::Usage(e.to_string()))
}

type Handler = fn(&ConfigFile, Option<u64>, &Path) -> Result<i32, Failure>;

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (common, handler): (&Common, Handler) = match &cli.command {
        Command::CheckGrad(c) => (c, commands::check_grad),
        Command::KlExample(c) => (c, commands::kl_example_cmd),
        Command::Variance(c) => (c, commands::variance),
        Command::MixtureSweep(c) => (c, commands::mixture_sweep_cmd),
        Command::Optimize(c) => (c, commands::optimize_cmd),
    };
    let result =
        load(common.config.as_deref()).and_then(|file| handler(&file, common.seed, &common.out));
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nusage: actorlab <check-grad|kl-example|variance|mixture-sweep|optimize> [--config FILE] [--seed N] [--out DIR]");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}
