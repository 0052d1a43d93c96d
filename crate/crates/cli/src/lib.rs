//! Command-line driver: loads corpora, runs the toolkit's stages and writes audit-friendly
//! report files. Every report embeds the effective configuration and the toolkit version.

pub mod commands;
pub mod config;
pub mod output;

use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

/// Exit status for an aggregate over an empty selection in `exec`.
pub const EXIT_EMPTY_AGGREGATE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "sqlbalance",
    version,
    about = "Oversampling experiments for sketch-based text-to-SQL"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each overrides the matching config-file field.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags win over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dev: Option<PathBuf>,
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    /// Table file (repeatable); all files are merged.
    #[arg(long = "tables", global = true)]
    pub tables: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub report_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Use only the five literal comparison phrases.
    #[arg(long, global = true)]
    pub strict_lexicon: bool,
    /// Compare logical forms without canonicalizing condition order.
    #[arg(long, global = true)]
    pub order_sensitive: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset statistics per split, plus histogram CSV.
    Stats,
    /// Oversample the training split and write the balanced corpus.
    Balance {
        #[arg(long)]
        factor: Option<usize>,
        /// Output examples file; provenance goes to `<out>.provenance`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the slot-filling parser on the training split.
    Train {
        /// Oversample before training (0 = no balancing).
        #[arg(long)]
        factor: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
        /// Output model file.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Continue training a model on the domain-specific slice of the training split.
    Finetune {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        subset_fraction: Option<f64>,
    },
    /// Predict sketches for every example of a split.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a predictions file against a split.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Baseline plus oversampling-ratio sweep, repeated per seed.
    Experiment {
        /// Comma-separated ratios, e.g. 1,2,3 (empty string for baseline only).
        #[arg(long)]
        factors: Option<String>,
        /// Comma-separated repetition seeds.
        #[arg(long)]
        seeds: Option<String>,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        finetune_epochs: Option<usize>,
        #[arg(long)]
        no_finetune: bool,
    },
    /// k-fold cross validation with fold-local oversampling.
    Kfold {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        factor: Option<usize>,
        #[arg(long, default_value = "train")]
        split: String,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Render and execute one sketch against one table.
    Exec {
        /// Table id (optional when the tables files hold exactly one table).
        #[arg(long)]
        table_id: Option<String>,
        /// Sketch as JSON: {"sel":..,"agg":..,"conds":[[col,op,value],..]}.
        #[arg(long)]
        sketch: String,
    },
    /// Generate a synthetic corpus in the WikiSQL file format.
    Synth {
        #[arg(long, default_value_t = 200)]
        examples: usize,
        #[arg(long, default_value_t = 40)]
        table_count: usize,
        #[arg(long, default_value_t = 0.14)]
        domain_fraction: f64,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value = "syn")]
        table_prefix: String,
        #[arg(long)]
        out_examples: PathBuf,
        #[arg(long)]
        out_tables: PathBuf,
    },
}

/// Parses `args` and runs the command, writing console output to `stdout`.
/// Returns the process exit status.
pub fn run_args<I, T>(args: I, stdout: &mut dyn Write) -> Result<i32>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    commands::dispatch(cli, stdout)
}
