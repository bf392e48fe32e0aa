//! `vultype` — config-driven pipeline for long-tailed vulnerability
//! type classification over function-level code.
//!
//! Exit codes: 0 success; 2 data or I/O failure (missing/corrupt
//! files); 3 configuration failure; 4 numeric failure (shape mismatch
//! or non-finite values).

mod charts;
mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{Ctx, SplitName, SweepAxis};
use vultype_core::training::TaskMode;
use vultype_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "vultype",
    version,
    about = "Long-tailed vulnerability type classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides `[data] seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    TypeClassification,
    Detection,
}

impl From<ModeArg> for TaskMode {
    fn from(m: ModeArg) -> TaskMode {
        match m {
            ModeArg::TypeClassification => TaskMode::TypeClassification,
            ModeArg::Detection => TaskMode::Detection,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> SplitName {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Valid => SplitName::Valid,
            SplitArg::Test => SplitName::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Layers,
    Hidden,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> SweepAxis {
        match a {
            AxisArg::Layers => SweepAxis::Layers,
            AxisArg::Hidden => SweepAxis::Hidden,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Split a corpus and write id manifests plus the class group table.
    Prepare {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate a synthetic long-tailed corpus from a recipe file.
    Synth {
        /// Recipe (TOML with a [synth] section).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the recipe's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model; writes checkpoint, run log, and summary.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Task preset; overrides `[train] mode`.
        #[arg(long)]
        mode: Option<ModeArg>,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Which split to score.
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Also dump per-sample representation vectors (CSV).
        #[arg(long)]
        export_representations: bool,
    },
    /// Merge metrics files into a comparison table and charts.
    Report {
        /// Metrics JSON files written by `eval` (repeatable).
        #[arg(long, required = true, num_args = 1..)]
        metrics: Vec<PathBuf>,
        /// Representation dump from `eval --export-representations`;
        /// adds a 2-D projection scatter.
        #[arg(long)]
        representations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare stacked vs. differentiated propagation on one graph.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        /// Graph JSON file (nodes + typed edges).
        #[arg(long)]
        graph: PathBuf,
        /// Propagation depths to tabulate.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0usize, 1, 2, 4, 8, 16])]
        depths: Vec<usize>,
    },
    /// Train across a hyper-parameter grid and tabulate accuracy.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Which axis to sweep; grids come from `[sweep]`.
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Task preset; overrides `[train] mode`.
        #[arg(long)]
        mode: Option<ModeArg>,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Validation(_) | Error::Io(_) => 2,
        Error::Config(_) => 3,
        Error::Shape(_) | Error::Numeric(_) => 4,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { common } => {
            let ctx = Ctx::new(&common.config, common.seed, &common.out)?;
            commands::cmd_prepare(&ctx)
        }
        Command::Synth { config, out, seed } => commands::cmd_synth(&config, seed, &out),
        Command::Train { common, mode } => {
            let ctx = Ctx::new(&common.config, common.seed, &common.out)?;
            commands::cmd_train(&ctx, mode.map(TaskMode::from))
        }
        Command::Eval {
            common,
            checkpoint,
            split,
            export_representations,
        } => {
            let ctx = Ctx::new(&common.config, common.seed, &common.out)?;
            commands::cmd_eval(&ctx, &checkpoint, split.into(), export_representations)
        }
        Command::Report {
            metrics,
            representations,
            out,
        } => commands::cmd_report(&metrics, representations.as_deref(), &out),
        Command::Diagnose {
            common,
            graph,
            depths,
        } => {
            let ctx = Ctx::new(&common.config, common.seed, &common.out)?;
            commands::cmd_diagnose(&ctx, &graph, &depths)
        }
        Command::Sweep { common, axis, mode } => {
            let ctx = Ctx::new(&common.config, common.seed, &common.out)?;
            commands::cmd_sweep(&ctx, axis.into(), mode.map(TaskMode::from))
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
