use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use xmodal::metrics::Metric;
use xmodal::retrieval::Direction;
use xmodal::scorer::{LossKind, NegativeMode};

#[derive(Debug, Parser)]
#[command(
    name = "xmodal",
    version,
    about = "Cross-modal embedding analysis: modality gap, retrieval, learned scorers"
)]
pub struct Cli {
    /// Seed for every random choice (subsets, splits, batching, initialisation).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Report format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub output: OutputFormat,

    /// Suppress informational messages on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true, env = "XMODAL_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Centroid gap and batched Wasserstein-2 between two embedding files.
    Gap(GapArgs),
    /// Rank candidates and report hit rate and precision at K.
    Retrieve(RetrieveArgs),
    /// Train an MLP scorer (fixed architecture or random search).
    Train(TrainArgs),
    /// Cross score matrix of a few sampled pairs.
    Heatmap(HeatmapArgs),
    /// Pairwise significance of hit counts across retrieval reports.
    Compare(CompareArgs),
    /// Validate embedding files and, optionally, a manifest.
    IngestCheck(IngestArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Text embeddings (XEB1).
    #[arg(long)]
    pub text: PathBuf,
    /// Image embeddings (XEB1).
    #[arg(long)]
    pub image: PathBuf,
    /// `text_id<TAB>image_id` manifest; rows are paired by position when omitted.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Allow up to this many captions per image (one-to-many); default one-to-one.
    #[arg(long)]
    pub captions_per_item: Option<usize>,
    /// Keep only the first manifest line per image and drop the other captions.
    #[arg(long, requires = "manifest")]
    pub first_caption: bool,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    /// First embedding file.
    #[arg(long)]
    pub a: PathBuf,
    /// Second embedding file.
    #[arg(long)]
    pub b: PathBuf,
    /// Rows per Wasserstein-2 batch; clamped to the row count.
    #[arg(long, default_value_t = xmodal::geometry::DEFAULT_W2_BATCH_SIZE)]
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    T2i,
    I2t,
    Both,
}

impl DirectionArg {
    pub fn directions(self) -> Vec<Direction> {
        match self {
            DirectionArg::T2i => vec![Direction::TextToImage],
            DirectionArg::I2t => vec![Direction::ImageToText],
            DirectionArg::Both => Direction::BOTH.to_vec(),
        }
    }
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse::<Metric>().map_err(|e| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse::<LossKind>().map_err(|e| e.to_string())
}

fn parse_negatives(s: &str) -> Result<NegativeMode, String> {
    s.parse::<NegativeMode>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("scorer").required(true).args(["metric", "model"])))]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// euclidean, cosine, manhattan or chi_square.
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<Metric>,
    /// Trained scorer model file (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DirectionArg::Both)]
    pub direction: DirectionArg,
    /// Cut-offs, comma separated.
    #[arg(long = "k", value_delimiter = ',', default_values_t = xmodal::retrieval::DEFAULT_KS)]
    pub ks: Vec<usize>,
    /// Evaluate on this many items drawn with --seed.
    #[arg(long)]
    pub subset: Option<usize>,
    /// L2-normalise both sides before scoring.
    #[arg(long)]
    pub normalize: bool,
    /// Write ranked lists as TSV; with both directions the direction is added to the file name.
    #[arg(long)]
    pub rankings: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("validation").args(["val_text", "split"])))]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Validation text embeddings; otherwise the corpus is split with --split.
    #[arg(long, requires = "val_image")]
    pub val_text: Option<PathBuf>,
    #[arg(long, requires = "val_text")]
    pub val_image: Option<PathBuf>,
    #[arg(long, requires = "val_text")]
    pub val_manifest: Option<PathBuf>,
    /// Train/validation/test ratios used when no validation files are given.
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_loss, default_value = "contrastive")]
    pub loss: LossKind,
    /// in_batch or full_dataset.
    #[arg(long, value_parser = parse_negatives, default_value = "in_batch")]
    pub negatives: NegativeMode,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100", conflicts_with = "search")]
    pub arch: Vec<usize>,
    /// Random architecture search instead of a fixed architecture.
    #[arg(long)]
    pub search: bool,
    /// Trials for the search (or seeded repeats of a fixed architecture).
    #[arg(long, default_value_t = 1)]
    pub budget: usize,
    #[arg(long, default_value_t = 1)]
    pub min_depth: usize,
    #[arg(long, default_value_t = 5)]
    pub max_depth: usize,
    /// Width choices for the search, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "100,200,300,400,500,600,700,800,900,1000,1100"
    )]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 5e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.01)]
    pub min_improvement: f64,
    /// Where to write the trained model.
    #[arg(long)]
    pub model_out: PathBuf,
    /// Where to write the per-epoch history CSV (default: next to the model).
    #[arg(long)]
    pub history_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_parser = parse_metric, default_value = "cosine", conflicts_with = "model")]
    pub metric: Metric,
    /// Score with a trained model instead of a metric.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Number of paired items to sample.
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Retrieval reports written by `retrieve --output json`.
    #[arg(required = true, num_args = 2..)]
    pub reports: Vec<PathBuf>,
    /// One family per (direction, K) across all scorers, instead of per scorer.
    #[arg(long)]
    pub across_metrics: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Embedding files to validate.
    pub files: Vec<PathBuf>,
    /// Text side for a manifest check.
    #[arg(long, requires_all = ["image", "manifest"])]
    pub text: Option<PathBuf>,
    #[arg(long, requires_all = ["text", "manifest"])]
    pub image: Option<PathBuf>,
    #[arg(long, requires_all = ["text", "image"])]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub captions_per_item: Option<usize>,
}
