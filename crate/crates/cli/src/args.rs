use std::path::PathBuf;

use acl_core::{FrequencyLaw, PeriodicFunction, SolverVariant};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "acl", version, about = "Compressive learning with random periodic feature sketches")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sketch a CSV dataset into a JSON sketch file.
    Sketch(SketchArgs),
    /// Fit a k-means or GMM model to a sketch.
    Learn(LearnArgs),
    /// Score a model on a dataset against a full-data baseline.
    Eval(EvalArgs),
    /// Emit verification tables as CSV.
    Verify(VerifyArgs),
    /// Run an experiment sweep described by a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Rff,
    Quantized,
    Modulo,
}

impl Kind {
    pub fn function(self) -> PeriodicFunction {
        match self {
            Kind::Rff => PeriodicFunction::ComplexExponential,
            Kind::Quantized => PeriodicFunction::UniversalQuantizer,
            Kind::Modulo => PeriodicFunction::ComplexModulo,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Kmeans,
    Gmm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    Gaussian,
    FoldedGaussian,
}

impl Law {
    pub fn law(self) -> FrequencyLaw {
        match self {
            Law::Gaussian => FrequencyLaw::Gaussian,
            Law::FoldedGaussian => FrequencyLaw::FoldedGaussian,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Clomp,
    Clompr,
    Splitting,
}

impl Variant {
    pub fn variant(self) -> SolverVariant {
        match self {
            Variant::Clomp => SolverVariant::Clomp,
            Variant::Clompr => SolverVariant::Clompr,
            Variant::Splitting => SolverVariant::Splitting,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Fourier coefficient, Lipschitz and covering constants per function.
    Constants,
    /// Sampled pointwise distortion against random Fourier features.
    Slpd,
    /// Grid certificate for the asymmetric argmin on random instances.
    Lemma2,
}

#[derive(Debug, Args, Serialize)]
pub struct SketchArgs {
    /// Input samples, one per row.
    #[arg(long)]
    pub data: PathBuf,
    /// The CSV starts with a header row.
    #[arg(long)]
    pub header: bool,
    /// Output sketch file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Sketch size.
    #[arg(long)]
    pub m: usize,
    #[arg(long, value_enum, default_value_t = Kind::Rff)]
    pub kind: Kind,
    #[arg(long, value_enum, default_value_t = Law::Gaussian)]
    pub law: Law,
    /// Frequency variance; defaults to the preset of `--preset`.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Task whose kernel-scale preset sets the default frequency variance.
    #[arg(long, value_enum, default_value_t = Task::Kmeans)]
    pub preset: Task,
    /// Divide the features by the first Fourier coefficient.
    #[arg(long)]
    pub renormalize: bool,
    /// Use zero dither.
    #[arg(long)]
    pub no_dither: bool,
    /// Split the rows over this many simulated nodes and merge their sketches.
    #[arg(long, default_value_t = 1)]
    pub nodes: usize,
    #[arg(long, env = "ACL_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct LearnArgs {
    /// Sketch file produced by `acl sketch`.
    #[arg(long)]
    pub sketch: PathBuf,
    /// Output model file.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Task::Kmeans)]
    pub task: Task,
    /// Number of components.
    #[arg(long)]
    pub k: usize,
    /// Lower corner of the box; one value is broadcast to every dimension.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0")]
    pub lower: Vec<f64>,
    /// Upper corner of the box; one value is broadcast to every dimension.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1")]
    pub upper: Vec<f64>,
    /// GMM variance cap; defaults to the squared largest box side.
    #[arg(long)]
    pub variance_cap: Option<f64>,
    /// Solver options as JSON; the flags below override its fields.
    #[arg(long)]
    pub solver_config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub inner_max_iters: Option<usize>,
    #[arg(long, env = "ACL_SEED")]
    pub seed: Option<u64>,
    /// Divide the sketch by the first Fourier coefficient of its map before
    /// solving.
    #[arg(long)]
    pub renormalize: bool,
    /// Write the convergence trace (iteration, cost) as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Model file produced by `acl learn`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub header: bool,
    /// Restarts of the full-data baseline.
    #[arg(long, default_value_t = 10)]
    pub baseline_restarts: usize,
    #[arg(long, default_value_t = acl_core::eval::DEFAULT_SUCCESS_FACTOR)]
    pub success_factor: f64,
    #[arg(long, env = "ACL_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Output CSV; standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Frequency variance.
    #[arg(long, default_value_t = 20.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Sketch sizes of the slpd suite.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [64, 256, 1024, 4096])]
    pub m_list: Vec<usize>,
    /// Functions compared with random Fourier features in the slpd suite.
    #[arg(long, value_enum, value_delimiter = ',', num_args = 1.., default_values_t = [Kind::Rff, Kind::Quantized, Kind::Modulo])]
    pub kinds: Vec<Kind>,
    /// Seeds per sketch size in the slpd suite.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Point pairs per slpd estimate.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    /// Random instances of the lemma2 suite.
    #[arg(long, default_value_t = 100)]
    pub instances: u64,
    /// Sketch size of the lemma2 suite.
    #[arg(long, default_value_t = 256)]
    pub m: usize,
    /// Components of each lemma2 instance.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Samples of each lemma2 instance.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Candidate models per lemma2 instance.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, env = "ACL_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentArgs {
    /// Experiment config as JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads for independent trials.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Per-cell summary CSV; standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Per-trial detail CSV.
    #[arg(long)]
    pub trials_out: Option<PathBuf>,
    /// Replaces the config's seed.
    #[arg(long, env = "ACL_SEED")]
    pub seed: Option<u64>,
}
