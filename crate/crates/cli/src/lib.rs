//! Command-line driver: corpus synthesis, training, generation and
//! evaluation, configured by a JSON file with flag overrides.

pub mod commands;
pub mod config;

use std::error::Error as StdError;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mwpgen_core::generator::PipelineError;
use mwpgen_core::numerics::NumericsError;
use mwpgen_core::train::TrainError;

pub use config::RunConfig;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mwpgen", version, about = "Math word problems from equations and a commonsense knowledge graph")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill the template bank into a synthetic dataset with train/dev/test splits.
    Synth(SynthArgs),
    /// Train a model and write checkpoints plus a JSON-lines log.
    Train(TrainArgs),
    /// Generate problems for one equation system, topic and binding.
    Generate(GenerateArgs),
    /// Score predictions against references.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Global seed (falls back to the config file, then MWPGEN_SEED, then 7).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Template bank (JSON lines) [default: data/templates.jsonl].
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Knowledge graph (TSV triples) [default: data/cskg.tsv].
    #[arg(long)]
    pub cskg: Option<PathBuf>,
    /// Output directory for train/dev/test files [default: runs/data].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of problems [default: 5447].
    #[arg(long)]
    pub count: Option<usize>,
    /// Dev split fraction [default: 0.1].
    #[arg(long)]
    pub dev_fraction: Option<f64>,
    /// Test split fraction [default: 0.1].
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset directory with train.jsonl and dev.jsonl [default: runs/data].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Knowledge graph (TSV triples) [default: data/cskg.tsv].
    #[arg(long)]
    pub cskg: Option<PathBuf>,
    /// Checkpoint output directory [default: runs/model].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Word and node embedding size [default: 128].
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Decoder hidden size [default: 512].
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Latent size [default: 128].
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// GGNN propagation hops [default: 3].
    #[arg(long)]
    pub hops: Option<usize>,
    /// Batch size [default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Probability of feeding the gold token [default: 0.5].
    #[arg(long)]
    pub teacher_forcing: Option<f64>,
    /// Fraction of the steps over which the KL weight ramps up [default: 0.5].
    #[arg(long)]
    pub kl_ramp_fraction: Option<f64>,
    /// Initial learning rate [default: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Training steps [default: 10000].
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Steps between dev evaluations and checkpoints [default: 200].
    #[arg(long)]
    pub eval_every: Option<u64>,
    /// BPE merges learned from the training targets [default: 1000].
    #[arg(long)]
    pub bpe_merges: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Model directory [default: the `best` checkpoint under paths.checkpoint].
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Knowledge graph (TSV triples) [default: data/cskg.tsv].
    #[arg(long)]
    pub cskg: Option<PathBuf>,
    /// Equation system, e.g. "y-x=6; 8y-4x=64".
    #[arg(long, allow_hyphen_values = true)]
    pub equations: String,
    #[arg(long)]
    pub topic: String,
    /// Entity bound to x.
    #[arg(long)]
    pub x: String,
    /// Entity bound to y.
    #[arg(long)]
    pub y: String,
    /// Number of problems, one prior draw each [default: 1].
    #[arg(short, long)]
    pub n: Option<usize>,
    /// Beam width [default: 5].
    #[arg(long)]
    pub beam_width: Option<usize>,
    /// Maximum generated tokens [default: 80].
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Write scores and the solved values as JSON to this path.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// One prediction per line: plain text, or a JSON object with `text` and
    /// optional `samples`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// One reference per line: plain text, or a JSON object with `text` and
    /// optional `references`.
    #[arg(long)]
    pub references: PathBuf,
    /// Write the full report as JSON to this path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Exit status for a failed command: numeric failures (non-finite values or
/// gradients) get [`EXIT_NUMERIC`], everything else [`EXIT_INPUT`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(is_numeric) {
        EXIT_NUMERIC
    } else {
        EXIT_INPUT
    }
}

fn is_numeric(err: &(dyn StdError + 'static)) -> bool {
    if let Some(e) = err.downcast_ref::<NumericsError>() {
        return matches!(e, NumericsError::NonFinite(_) | NumericsError::NonFiniteGradient(_));
    }
    match (err.downcast_ref::<TrainError>(), err.downcast_ref::<PipelineError>()) {
        (Some(TrainError::Numerics(e)), _) | (_, Some(PipelineError::Numerics(e))) => is_numeric(e),
        _ => false,
    }
}
