//! Ground truth, classical baselines, task metrics and the experiment
//! harness used to score compressive learning against full-data learning.

mod baselines;
mod experiment;
mod generate;
mod metrics;

pub use baselines::{em_baseline, kmeans_baseline, kmeans_plus_plus, BaselineFit, MAX_ITERS, RELATIVE_TOLERANCE};
pub use experiment::{run_experiment, CellResult, ExperimentConfig, ExperimentResult, TrialResult};
pub use generate::{generate_gmm_data, PlantedData, PlantedMixture, PLACEMENT_ROUNDS};
pub use metrics::{
    empirical_excess_risk, log_likelihood, risk, sse, success, Outcome, DEFAULT_SUCCESS_FACTOR,
};
