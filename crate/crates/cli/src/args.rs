use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sablock", version, about = "KV-cache eviction experiments on attention traces")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct GlobalArgs {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Strength of the segment factor in adjusted scores.
    #[arg(long, global = true, default_value_t = 0.9)]
    pub alpha: f64,
    /// Weight of attention diversity in the segment weight.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub eta: f64,
    /// Entropy smoothing term.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// Fidelity a block size must keep to be accepted, in (0, 1].
    #[arg(long, global = true, default_value_t = 0.85)]
    pub tau: f64,
    /// Largest block size considered.
    #[arg(long, global = true, default_value_t = 13)]
    pub gmax: usize,
    /// Candidate block sizes, ascending and starting at 1.
    #[arg(long, global = true, value_delimiter = ',', default_value = "1,2,3,5,7,9,11,13")]
    pub ladder: Vec<usize>,
    /// Search every block size in 1..=gmax instead of the ladder.
    #[arg(long, global = true)]
    pub dense_range: bool,
    /// Characters that end a segment; `\n` denotes a newline.
    #[arg(long, global = true, default_value = ".!?;:,\\n")]
    pub delims: String,
    /// Longest segment before a forced split.
    #[arg(long = "max-seg-len", global = true, default_value_t = 256)]
    pub max_seg_len: usize,
    /// Tokens kept from the compressible region.
    #[arg(long, global = true, default_value_t = 96)]
    pub budget: usize,
    /// Output path.
    #[arg(short = 'o', long = "out", global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic attention traces.
    Gen(GenArgs),
    /// Compress one trace with SABlock and write the plan.
    Compress(CompressArgs),
    /// Run several policies on one trace and tabulate metrics.
    Compare(CompareArgs),
    /// Sweep budgets and policies over a directory of traces.
    Sweep(SweepArgs),
    /// Report diagnostic metrics for a trace and, optionally, a plan.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct GenArgs {
    /// Compressible-region length.
    #[arg(long, default_value_t = 2000)]
    pub tokens: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 8)]
    pub window: usize,
    /// First token of a planted needle sentence.
    #[arg(long)]
    pub needle_at: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub needle_len: usize,
    #[arg(long, default_value_t = 50.0)]
    pub needle_boost: f64,
    /// Mean tokens between delimiters.
    #[arg(long, default_value_t = 8.0)]
    pub punct_period: f64,
    /// Log-normal spread of token salience.
    #[arg(long, default_value_t = 1.0)]
    pub skew: f64,
    /// Number of traces; with more than one, `-o` names a directory and
    /// trace i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct CompressArgs {
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Comma-separated: streaming[:n], h2o, snapkv, chunkkv:<g>, sentencekv, sablock.
    #[arg(long, default_value = "streaming,h2o,snapkv,chunkkv:7,sentencekv,sablock")]
    pub policies: String,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SweepArgs {
    /// Directory of trace files (*.json).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256,512")]
    pub budgets: Vec<usize>,
    #[arg(long, default_value = "snapkv,chunkkv:7,sablock")]
    pub policies: String,
    /// Where to write per-budget block-size histograms (JSON).
    #[arg(long)]
    pub hist_out: Option<PathBuf>,
    /// Run on one thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Plan produced by `compress` for the same trace.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Block sizes for the cross-sentence rate.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
    pub block_sizes: Vec<usize>,
    /// KV-cache shape `batch,layers,seq_len,heads,head_dim,bytes` for the
    /// analytic size estimate.
    #[arg(long, value_delimiter = ',')]
    pub kv_shape: Option<Vec<u64>>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}
