//! Compressive learning from random periodic feature sketches.
//!
//! A dataset is summarized by the average of a random feature map
//! `Ψ(x) = (1/√m) f(Ωᵀx + ξ)` where `f` is any 2π-periodic function, such as
//! a one-bit universal quantizer. Mixture models (k-means centroids or
//! diagonal Gaussian mixtures) are then fitted to the sketch alone by
//! matching it against the analytic sketch computed with random Fourier
//! features sharing `Ω` and `ξ`.

pub mod data;
pub mod eval;
pub mod error;
pub mod features;
pub mod models;
pub mod periodic;
pub mod sketch;
pub mod solver;
pub mod theory;

pub use data::Dataset;
pub use error::{Error, Result};
pub use features::{FeatureMap, FeatureMapConfig, FrequencyLaw, ScalePreset};
pub use models::{BoxDomain, DiracMixture, GaussianMixture, Mixture, TaskKind};
pub use periodic::PeriodicFunction;
pub use sketch::{sketch_dataset, Sketch};
pub use solver::{solve, SolverOptions, SolverVariant, TaskSpec};
