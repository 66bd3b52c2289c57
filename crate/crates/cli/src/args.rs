use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hybfer", version, about = "Facial expression recognition with CNN + SIFT / Dense SIFT fusion")]
pub struct Cli {
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from scratch.
    Train(TrainArgs),
    /// Score one checkpoint, or the probability average of several.
    Evaluate(EvaluateArgs),
    /// Cluster keypoint descriptors of the training images into a codebook.
    FitCodebook(FitCodebookArgs),
    /// Continue training a pretrained checkpoint on six-class data.
    FineTune(FineTuneArgs),
    /// k-fold fine-tuning and evaluation on a six-class file.
    CrossValidate(CrossValidateArgs),
    /// Write per-sample class probabilities and predicted labels.
    Predict(PredictArgs),
    /// Write each training image and its ten augmented variants to a CSV.
    Augment(AugmentArgs),
    /// Generate a synthetic labelled CSV in the dataset format.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Cnn,
    CnnSift,
    CnnDsift,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Public,
    Private,
}

#[derive(Debug, Args)]
pub struct Hyper {
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on the original images only.
    #[arg(long)]
    pub no_augment: bool,
    /// Use only the first N training samples.
    #[arg(long)]
    pub max_train: Option<usize>,
    /// JSON-lines history path [default: <out>.history.jsonl].
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Codebook file; required for cnn-sift.
    #[arg(long, required_if_eq("model", "cnn-sift"))]
    pub codebook: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    /// 7 for FER-2013 labels, 6 for the CK+ subset.
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u8).range(6..=7))]
    pub classes: u8,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Repeat to average several models.
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "private")]
    pub split: SplitName,
    /// Confusion matrix CSV [default: confusion.csv].
    #[arg(long, default_value = "confusion.csv")]
    pub confusion: PathBuf,
    /// Score only the first N samples of the split.
    #[arg(long)]
    pub max_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitCodebookArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2048)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use only the first N training images.
    #[arg(long)]
    pub max_train: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FineTuneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Debug, Args)]
pub struct CrossValidateArgs {
    /// Pretrained checkpoint to fine-tune in every fold.
    #[arg(long, required_unless_present = "plan_only")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_augment: bool,
    /// Only write the fold assignment, without training.
    #[arg(long)]
    pub plan_only: bool,
    /// JSON report path.
    #[arg(long, default_value = "cv_report.json")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u8).range(6..=7))]
    pub classes: u8,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u8).range(6..=7))]
    pub classes: u8,
    #[arg(long, default_value_t = 100)]
    pub train: usize,
    #[arg(long, default_value_t = 0)]
    pub public: usize,
    #[arg(long, default_value_t = 0)]
    pub private: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
