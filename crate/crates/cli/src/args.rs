use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "fusedstyle",
    version,
    about = "Stylized response generation over a shared latent space"
)]
#[command(args_override_self = true, propagate_version = true)]
pub struct Cli {
    /// TOML file whose `[<subcommand>]` table overrides command-line flags.
    #[arg(long, global = true, value_name = "FILE", display_order = 900)]
    pub config: Option<PathBuf>,

    /// Worker threads for parallel sections. 1 gives single-threaded runs.
    #[arg(long, global = true, display_order = 901)]
    pub threads: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count, display_order = 902)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic two-register corpus, a multi-reference test corpus and a vocabulary.
    SynthData(SynthDataArgs),
    /// Train a generator variant.
    Train(TrainArgs),
    /// Train the n-gram and neural style classifiers and the keyword list.
    TrainClassifiers(TrainClassifiersArgs),
    /// Build the stylized multi-reference test set.
    BuildTestset(BuildTestsetArgs),
    /// Evaluate systems on the test set and write the comparison grid.
    Eval(EvalArgs),
    /// Metrics of top-1 outputs over a range of sampling radii.
    SweepRho(SweepRhoArgs),
    /// Project latent codes of contexts, responses and style sentences to 2-D.
    Mds(MdsArgs),
    /// Generate ranked responses for contexts.
    Generate(GenerateArgs),
    /// Run the HTTP inference service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthDataArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Conversation pairs in the training corpus.
    #[arg(long, default_value_t = 5000)]
    pub pairs: usize,
    /// Sentences in the style corpus.
    #[arg(long, default_value_t = 2000)]
    pub style: usize,
    #[arg(long, default_value_t = 1)]
    pub responses_per_context: usize,
    /// Fraction of training responses that are partially stylized.
    #[arg(long, default_value_t = 0.1)]
    pub stylized_response_rate: f64,
    /// Contexts in the test corpus.
    #[arg(long, default_value_t = 400)]
    pub test_contexts: usize,
    /// Responses per test context, all partially stylized.
    #[arg(long, default_value_t = 8)]
    pub test_responses: usize,
    /// JSON grammar replacing the built-in one.
    #[arg(long)]
    pub grammar: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ArchArgs {
    /// Latent dimension, also the recurrent width.
    #[arg(long, default_value_t = 32)]
    pub latent_dim: usize,
    /// Embedding width; defaults to the latent dimension.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size_conv: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size_style: usize,
    #[arg(long, default_value_t = 2)]
    pub pretrain_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub validation_frac: f64,
    /// Gradient norm clip; 0 disables.
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    /// Optional cap on the spread-out term.
    #[arg(long)]
    pub spread_cap: Option<f64>,
    /// Masking constant: a token of frequency f is masked with probability c / f.
    #[arg(long, default_value_t = 1.0)]
    pub mask_c: f64,
    /// Upper bound on the per-token masking probability.
    #[arg(long, default_value_t = 0.5)]
    pub mask_cap: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// mtask, space_fusion, style_fusion, s2s, s2s_lm or retrieval.
    #[arg(long)]
    pub variant: String,
    /// Conversation TSV.
    #[arg(long)]
    pub conv: PathBuf,
    /// Style corpus, one sentence per line.
    #[arg(long)]
    pub style: Option<PathBuf>,
    /// Vocabulary file; built from the training data and written here when missing.
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub vocab_size: usize,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Style language model output for s2s_lm; defaults to `<out>.lm`.
    #[arg(long)]
    pub lm_out: Option<PathBuf>,
    /// JSONL training log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 0.5)]
    pub lm_weight: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainClassifiersArgs {
    #[arg(long)]
    pub conv: PathBuf,
    #[arg(long)]
    pub style: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Output scorer checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Keyword TSV output.
    #[arg(long)]
    pub keywords_out: Option<PathBuf>,
    /// A keyword must occur in more than this many sentences.
    #[arg(long, default_value_t = 20)]
    pub keyword_threshold: usize,
    #[arg(long, default_value_t = 100)]
    pub keyword_top_k: usize,
    #[arg(long, default_value_t = 0.1)]
    pub holdout_frac: f64,
    #[arg(long, default_value_t = 10)]
    pub ngram_epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub neural_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BuildTestsetArgs {
    /// Conversation TSV with several responses per context.
    #[arg(long)]
    pub conv: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub scorer: PathBuf,
    /// Output JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// A reference needs a style probability above this.
    #[arg(long, default_value_t = 0.3)]
    pub threshold: f64,
    #[arg(long, default_value_t = 4)]
    pub min_refs: usize,
    /// Keep at most this many contexts.
    #[arg(long)]
    pub max_contexts: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SamplingArgs {
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 100)]
    pub n_candidates: usize,
    #[arg(long, default_value_t = 30)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ScoringArgs {
    #[arg(long)]
    pub scorer: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Test set JSONL from build-testset.
    #[arg(long)]
    pub testset: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub threshold: f64,
    #[arg(long, default_value_t = 4)]
    pub min_refs: usize,
    /// Keyword TSV for the count metric.
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    /// Style corpus; normalizes the count metric and feeds rand and retrieval.
    #[arg(long)]
    pub style: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Generator checkpoint; repeat for several systems.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// rand or human_ref; repeatable.
    #[arg(long = "baseline")]
    pub baselines: Vec<String>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, default_value_t = 0.5)]
    pub lm_weight: f64,
    /// Comparison grid CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepRhoArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1,1.25,1.5")]
    pub rhos: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 100)]
    pub n_candidates: usize,
    #[arg(long, default_value_t = 30)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sweep CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MdsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub conv: PathBuf,
    #[arg(long)]
    pub style: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Points drawn per group.
    #[arg(long, default_value_t = 500)]
    pub per_group: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// MDS CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    #[arg(long)]
    pub scorer: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Style language model; defaults to `<model>.lm` for s2s_lm checkpoints.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub lm_weight: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Context text, utterances separated by ` <EOU> `. Repeatable.
    #[arg(long = "context")]
    pub contexts: Vec<String>,
    /// File with one context per line.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Sample towards the latent code of this sentence.
    #[arg(long)]
    pub towards: Option<String>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// JSONL output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Generator checkpoint. Without one the service answers 503.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub scorer: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub lm_weight: f64,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = 30)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
}
