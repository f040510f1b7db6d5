//! `spinmotif`: reproducible runs of the exact, motif and training pipelines.
//!
//! Each subcommand takes `--seed`, `--config` (a JSON object whose keys match
//! the long flag names with underscores) and `--out`. Flags override config
//! keys, which override built-in defaults. Every run writes `config.json`, the
//! fully resolved configuration with its SHA-256, and `manifest.json` listing
//! the digest of each output; passing that `config.json` back through
//! `--config` reproduces the outputs byte for byte.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration, 3 numerical
//! failure. Failures print one JSON object on stderr.

mod commands;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::commands::{BasisParams, CftParams, ExactParams, MevParams, MotifRankParams, RegressParams, TrainParams};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "spinmotif", version, about = "Shallow-CNN wavefunctions for SU(M) spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Root seed for all random substreams.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file; flags take precedence over its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $SPINMOTIF_OUT/<command>-<hash>, or runs/...).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct With<P: Args> {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    params: P,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enumerate the basis and its symmetry classes.
    Basis(With<BasisParams>),
    /// Exact motif-count-matrix ranks and the critical kernel size.
    MotifRank(With<MotifRankParams>),
    /// Ground state, entanglement spectrum and class-mass curves.
    Exact(With<ExactParams>),
    /// Motif expectation values, optionally against a trained network.
    Mev(With<MevParams>),
    /// Fit the thermal entanglement model to exact MEVs.
    Cft(With<CftParams>),
    /// Train CNN wavefunctions over several seeds.
    Train(With<TrainParams>),
    /// Least-squares fits over CSV tables.
    Regress(With<RegressParams>),
}

macro_rules! dispatch {
    ($name:expr, $with:expr, $f:path) => {{
        let With { common, params } = $with;
        run::merge($name, &params, common.seed, common.config.as_deref())
            .and_then(|(params, seed)| $f(params, seed, common.out.as_deref()))
    }};
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code() as u8);
        }
    };
    let result = match cli.command {
        Command::Basis(w) => dispatch!("basis", w, commands::basis),
        Command::MotifRank(w) => dispatch!("motif-rank", w, commands::motif_rank),
        Command::Exact(w) => dispatch!("exact", w, commands::exact),
        Command::Mev(w) => dispatch!("mev", w, commands::mev),
        Command::Cft(w) => dispatch!("cft", w, commands::cft),
        Command::Train(w) => dispatch!("train", w, commands::train),
        Command::Regress(w) => dispatch!("regress", w, commands::regress),
    };
    match result {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", json!(err.to_json()));
            ExitCode::from(err.code() as u8)
        }
    }
}
