use std::path::PathBuf;

use acmca::data::SignalLayout;
use acmca::experiment::Preset;
use acmca::train::{OptimizerKind, SweepAxis};
use clap::{Args, Parser, Subcommand};

pub const OUTPUT_ROOT_ENV: &str = "ACMCA_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "acmca", version, about = "Multimodal CN/MCI/AD classifier: data preparation, training, evaluation and experiment presets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, encode, intersect and split a cohort into a model-ready dataset
    Prepare(PrepareArgs),
    /// Train one model per configured variant on a prepared dataset
    Train(TrainArgs),
    /// Score a checkpoint on a prepared dataset
    Eval(EvalArgs),
    /// Run a named experiment preset
    Preset(PresetArgs),
    /// Sweep one hyperparameter for a single variant
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (TOML); command-line flags override it
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory [default: $ACMCA_OUTPUT_ROOT/<command>, else the config's output_dir]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for data generation, splitting and initialization
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Generate a synthetic cohort instead of reading files
    #[arg(long, conflicts_with_all = ["clinical", "genotype", "mri_features", "pet_features"])]
    pub synthetic: bool,
    /// Clinical CSV (subject_id,gender,age,moca,mmse,cdr,faq,gds,label)
    #[arg(long, value_name = "FILE")]
    pub clinical: Option<PathBuf>,
    /// Genotype TSV
    #[arg(long, value_name = "FILE")]
    pub genotype: Option<PathBuf>,
    /// MRI feature-vector CSV (subject_id,f0,f1,...)
    #[arg(long, value_name = "FILE")]
    pub mri_features: Option<PathBuf>,
    /// PET feature-vector CSV (subject_id,f0,f1,...)
    #[arg(long, value_name = "FILE")]
    pub pet_features: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Minimum genotype quality; lower calls count as missing
    #[arg(long)]
    pub min_gq: Option<u32>,
    /// Maximum per-site missing-call fraction
    #[arg(long)]
    pub max_missing: Option<f64>,
    /// Minimum minor allele frequency
    #[arg(long)]
    pub min_maf: Option<f64>,
    /// Hardy-Weinberg p-value below which a site is dropped
    #[arg(long)]
    pub hwe_p: Option<f64>,
    /// Number of highest-variance SNPs kept after filtering
    #[arg(long)]
    pub top_k_snps: Option<usize>,
    /// Fraction of each class held out for testing
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synthetic subjects per class
    #[arg(long)]
    pub n_per_class: Option<usize>,
    /// Synthetic SNP sites before filtering
    #[arg(long)]
    pub snp_count: Option<usize>,
    /// Width of the synthetic MRI and PET feature vectors
    #[arg(long)]
    pub img_width: Option<usize>,
    /// Distance between synthetic class means (0 = no signal)
    #[arg(long)]
    pub separation: Option<f64>,
    /// Shared latent-factor weight across modalities, in [0, 1)
    #[arg(long)]
    pub correlation: Option<f64>,
    /// Where the class signal lives: shared or split-pairs
    #[arg(long, value_parser = parse_signal)]
    pub signal: Option<SignalLayout>,
}

fn parse_signal(s: &str) -> Result<SignalLayout, String> {
    match s {
        "shared" => Ok(SignalLayout::Shared),
        "split-pairs" => Ok(SignalLayout::SplitPairs),
        other => Err(format!("unknown signal layout '{other}' (shared, split-pairs)")),
    }
}

#[derive(Debug, Args)]
pub struct Hyper {
    /// Training epochs [default: 125]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning rate [default: 0.001]
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    /// Encoder output width; must be a perfect square
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// sgd or adam
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Prepared dataset directory
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,
    /// Variant to train (repeatable): acmca, wcm, wde, wfnet, wt, symmetric, mcad, concat or a subset like CM
    #[arg(long = "variant", value_name = "NAME")]
    pub variants: Vec<String>,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Prepared dataset directory
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,
    /// Split to score: test or train
    #[arg(long, default_value = "test", value_parser = ["test", "train"])]
    pub split: String,
    /// Output directory [default: $ACMCA_OUTPUT_ROOT/eval, else ./acmca-out/eval]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    /// modality-matrix, variant-comparison, ablation-suite, sweep-epochs, sweep-batch or sweep-dim
    pub name: Preset,
    #[command(flatten)]
    pub common: Common,
    /// Prepared dataset directory [default: build one from the configuration]
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Comma-separated values for sweep presets
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<usize>>,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// epochs, batch-size or feature-dim
    #[arg(long)]
    pub axis: SweepAxis,
    /// Comma-separated values [default: a built-in grid per axis]
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<usize>>,
    /// Variant to sweep
    #[arg(long, default_value = "acmca")]
    pub variant: String,
    #[command(flatten)]
    pub common: Common,
    /// Prepared dataset directory [default: build one from the configuration]
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: Hyper,
}
