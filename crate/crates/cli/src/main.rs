//! `bcprior`: clustering, prior synthesis and simulation from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use output::EXIT_USAGE;

#[derive(Parser, Debug)]
#[command(
    name = "bcprior",
    version,
    about = "Bayesian clustering MAP priors from multisource external data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Map,
    Bcmap,
    Rbcmap,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Directory for machine-readable artifacts.
    #[arg(long, env = "BCPRIOR_OUT_DIR", default_value = "bcprior-out")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster per-source posteriors and select the number of clusters.
    Cluster {
        /// Dataset file (CSV or JSON).
        data: PathBuf,
        /// Fixed number of clusters; skips selection.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = bcprior::evidence::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize a MAP, BCMAP or rBCMAP prior and report its ESS.
    Synthesize {
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Bcmap)]
        mode: Mode,
        /// Robustness weight (rbcmap only, default 0.5).
        #[arg(long)]
        w: Option<f64>,
        #[arg(long, default_value_t = bcprior::evidence::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Run the estimation (RMSE) study of a scenario config.
    Simulate {
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the operating-characteristics study of an OC config.
    Oc {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let res = match cli.command {
        Command::Cluster {
            data,
            k,
            threshold,
            seed,
            common,
        } => commands::cluster(&data, k, threshold, seed, &common),
        Command::Synthesize {
            data,
            mode,
            w,
            threshold,
            k,
            seed,
            common,
        } => commands::synthesize(&data, mode, w, threshold, k, seed, &common),
        Command::Simulate {
            config,
            seed,
            common,
        } => commands::simulate(&config, seed, &common),
        Command::Oc {
            config,
            seed,
            common,
        } => commands::oc(&config, seed, &common),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bcprior: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
