//! `ompd`: run the reference experiments and verify their regret bounds.
//!
//! Exit codes: 0 success, 2 configuration error, 3 output directory not
//! empty, 4 missing or unreadable trace, 5 trace sanity failure, 6 declared
//! constants fail validation, 7 regret bound violated, 8 solver failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{cmd_run, cmd_verify, Exit, RunArgs, VerifyArgs};
use config::ExperimentKind;
use ompd_core::experiments::Variant;

#[derive(Debug, Parser)]
#[command(
    name = "ompd",
    version,
    about = "Inexact online proximal mirror descent experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Exact,
    Inexact,
    Both,
}

impl VariantArg {
    fn variants(self) -> Vec<Variant> {
        match self {
            VariantArg::Exact => vec![Variant::Exact],
            VariantArg::Inexact => vec![Variant::Inexact],
            VariantArg::Both => vec![Variant::Exact, Variant::Inexact],
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write its CSVs into the output directory.
    Run {
        #[arg(long, value_enum)]
        experiment: ExperimentKind,
        /// Sectioned key = value file; defaults apply to omitted keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Replace files in a nonempty output directory.
        #[arg(long)]
        overwrite: bool,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, value_enum, default_value = "exact")]
        variant: VariantArg,
    },
    /// Recompute the regret bound from a finished run and check it.
    Verify {
        #[arg(long)]
        out: PathBuf,
        /// Use this config instead of the copy stored with the run.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restrict to one variant (default: every variant of the run).
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
    },
}

fn init_threads() {
    if let Some(n) = std::env::var("OMPD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Command::Run {
            experiment,
            config,
            out,
            seed,
            overwrite,
            horizon,
            variant,
        } => cmd_run(&RunArgs {
            experiment,
            config,
            out,
            seed,
            overwrite,
            horizon,
            variants: variant.variants(),
        }),
        Command::Verify {
            out,
            config,
            variant,
        } => cmd_verify(&VerifyArgs {
            out,
            config,
            variants: variant.map(VariantArg::variants),
        }),
    };
    match result {
        Ok(()) => ExitCode::from(Exit::Ok as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit() as u8)
        }
    }
}
