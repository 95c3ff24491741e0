//! Sweeps over sketch size, feature kind and dataset size on planted data,
//! scored against classical baselines.

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{em_baseline, kmeans_baseline};
use super::generate::PlantedMixture;
use super::metrics::{empirical_excess_risk, success, Outcome, DEFAULT_SUCCESS_FACTOR};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::{FeatureMapConfig, FrequencyLaw, ScalePreset};
use crate::models::{BoxDomain, Mixture, TaskKind};
use crate::periodic::PeriodicFunction;
use crate::sketch::sketch_dataset;
use crate::solver::{solve, SolverOptions, TaskSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    /// Sizes of the sketched datasets.
    pub n_list: Vec<usize>,
    /// Size of the dataset used for the baseline and for scoring. Sketched
    /// datasets are drawn from it without replacement. Defaults to the
    /// largest entry of `n_list`.
    pub super_n: Option<usize>,
    /// Sketch sizes.
    pub m_list: Vec<usize>,
    /// Additional sketch sizes given as multiples of `K d`.
    pub m_over_kd: Vec<f64>,
    pub kinds: Vec<PeriodicFunction>,
    pub trials: usize,
    pub seed: u64,
    pub success_factor: f64,
    pub law: FrequencyLaw,
    /// Data-space kernel variance; the task preset when absent.
    pub kernel_variance: Option<f64>,
    pub separation: f64,
    pub component_std: f64,
    pub std_spread: f64,
    /// Defaults to the task's default solver.
    pub solver: Option<SolverOptions>,
    pub baseline_restarts: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let planted = PlantedMixture::default();
        Self {
            task: TaskKind::KMeans,
            k: planted.k,
            d: planted.d,
            n_list: vec![10_000],
            super_n: None,
            m_list: Vec::new(),
            m_over_kd: vec![2.0, 10.0],
            kinds: vec![
                PeriodicFunction::ComplexExponential,
                PeriodicFunction::UniversalQuantizer,
                PeriodicFunction::ComplexModulo,
            ],
            trials: 10,
            seed: 0,
            success_factor: DEFAULT_SUCCESS_FACTOR,
            law: FrequencyLaw::FoldedGaussian,
            kernel_variance: None,
            separation: planted.separation,
            component_std: planted.component_std,
            std_spread: planted.std_spread,
            solver: None,
            baseline_restarts: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if !(self.success_factor > 1.0) {
            return Err(Error::invalid("success factor must exceed 1"));
        }
        if self.k == 0 || self.d == 0 {
            return Err(Error::invalid("K and d must be positive"));
        }
        if self.n_list.is_empty() || self.kinds.is_empty() || self.sketch_sizes().is_empty() {
            return Err(Error::invalid("n_list, kinds and sketch sizes must be nonempty"));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < self.k || n > self.dataset_size()) {
            return Err(Error::invalid(format!(
                "n = {n} must lie between K and the dataset size {}",
                self.dataset_size()
            )));
        }
        if self.m_over_kd.iter().any(|r| !(*r > 0.0)) || self.m_list.contains(&0) {
            return Err(Error::invalid("sketch sizes must be positive"));
        }
        if self.kernel_variance.is_some_and(|v| !(v > 0.0)) {
            return Err(Error::invalid("kernel variance must be positive"));
        }
        if self.baseline_restarts == 0 {
            return Err(Error::invalid("baseline restarts must be at least 1"));
        }
        Ok(())
    }

    /// `m_list` followed by the `m_over_kd` sizes, without duplicates.
    pub fn sketch_sizes(&self) -> Vec<usize> {
        let kd = (self.k * self.d) as f64;
        let mut sizes: Vec<usize> = Vec::new();
        let from_ratio = self.m_over_kd.iter().map(|r| (r * kd).round().max(1.0) as usize);
        for m in self.m_list.iter().copied().chain(from_ratio) {
            if !sizes.contains(&m) {
                sizes.push(m);
            }
        }
        sizes
    }

    pub fn dataset_size(&self) -> usize {
        self.super_n
            .unwrap_or_else(|| self.n_list.iter().copied().max().unwrap_or(0))
    }

    /// Per-coordinate frequency variance.
    pub fn frequency_variance(&self) -> f64 {
        match self.kernel_variance {
            Some(v) => 1.0 / v,
            None => match self.task {
                TaskKind::KMeans => ScalePreset::KMeans.frequency_variance(self.d),
                TaskKind::Gmm => ScalePreset::Gmm.frequency_variance(self.d),
            },
        }
    }

    pub fn solver_options(&self, task: &TaskSpec) -> SolverOptions {
        self.solver
            .clone()
            .unwrap_or_else(|| SolverOptions::default_for(task))
    }

    fn planted(&self) -> PlantedMixture {
        PlantedMixture {
            k: self.k,
            d: self.d,
            separation: self.separation,
            component_std: self.component_std,
            std_spread: self.std_spread,
        }
    }
}

/// One solver run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub n: usize,
    pub m: usize,
    pub kind: String,
    pub trial: usize,
    pub cost: Option<f64>,
    pub excess_risk: Option<f64>,
    pub outcome: Option<Outcome>,
    pub error: Option<String>,
}

/// Aggregate over the trials of one `(n, m, kind)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub task: String,
    pub m: usize,
    #[serde(rename = "m_over_Kd")]
    pub m_over_kd: f64,
    pub kind: String,
    pub n: usize,
    /// Median excess risk over trials that ran; NaN if none did.
    pub median_excess: f64,
    /// Fraction of successes among evaluable trials; NaN if none were.
    pub success_rate: f64,
    pub trials: usize,
    #[serde(skip)]
    pub errors: usize,
    #[serde(skip)]
    pub not_evaluable: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
    pub trials: Vec<TrialResult>,
    /// Risk of the baseline on the scoring dataset.
    pub baseline_risk: f64,
}

impl ExperimentResult {
    pub fn cell(&self, n: usize, m: usize, kind: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.n == n && c.m == m && c.kind == kind)
    }

    /// Summary table, one row per cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for cell in &self.cells {
            writer.serialize(cell)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// One row per solver run.
    pub fn write_trials_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["n", "m", "kind", "trial", "cost", "excess_risk", "outcome", "error"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in &self.trials {
            let outcome = t.outcome.map(|o| {
                serde_json::to_value(o)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default()
            });
            writer.write_record([
                t.n.to_string(),
                t.m.to_string(),
                t.kind.clone(),
                t.trial.to_string(),
                opt(t.cost),
                opt(t.excess_risk),
                outcome.unwrap_or_default(),
                t.error.clone().unwrap_or_default(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// SplitMix64 finalizer used to derive independent stream seeds.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |acc, p| mix(acc ^ mix(*p)))
}

const STREAM_DATA: u64 = 1;
const STREAM_BASELINE: u64 = 2;
const STREAM_SUBSET: u64 = 3;
const STREAM_OMEGA: u64 = 4;
const STREAM_DITHER: u64 = 5;
const STREAM_SOLVER: u64 = 6;

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    full: &'a Dataset,
    baseline: &'a Mixture,
    task: &'a TaskSpec,
    sigma2: f64,
}

/// All kinds for one `(n, m, trial)`; they share the subset, Ω and ξ.
fn run_job(shared: &Shared<'_>, n: usize, m: usize, trial: usize) -> Vec<TrialResult> {
    let cfg = shared.cfg;
    let full = shared.full;
    let subset;
    let data = if n == full.len() {
        full
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &[STREAM_SUBSET, n as u64, trial as u64],
        ));
        let mut rows = sample(&mut rng, full.len(), n).into_vec();
        rows.sort_unstable();
        subset = full.select(&rows);
        &subset
    };
    let cell = [n as u64, m as u64, trial as u64];
    let base = FeatureMapConfig {
        d: cfg.d,
        m,
        law: cfg.law,
        sigma2: shared.sigma2,
        omega_seed: derive_seed(cfg.seed, &[STREAM_OMEGA, m as u64, trial as u64]),
        dither_seed: Some(derive_seed(cfg.seed, &[STREAM_DITHER, m as u64, trial as u64])),
        nonlinearity: PeriodicFunction::ComplexExponential,
        renormalize: false,
    };
    let mut opts = cfg.solver_options(shared.task);
    opts.seed = derive_seed(cfg.seed, &[STREAM_SOLVER, cell[0], cell[1], cell[2]]);

    cfg.kinds
        .iter()
        .map(|kind| {
            let outcome = (|| -> Result<(f64, f64, Outcome)> {
                let (learning, sketching) = if matches!(kind, PeriodicFunction::ComplexExponential) {
                    // symmetric sketching needs no dither
                    let cfg = FeatureMapConfig {
                        dither_seed: None,
                        ..base.clone()
                    };
                    (cfg.clone(), cfg)
                } else {
                    (base.clone(), base.with_nonlinearity(kind.clone(), true))
                };
                let sketch_map = sketching.build()?;
                let learn_map = learning.build()?;
                let z = sketch_dataset(&sketch_map, data)?;
                let report = solve(&z, &learn_map, shared.task, &opts)?;
                let excess = empirical_excess_risk(&report.model, shared.baseline, full)?;
                let verdict = success(&report.model, shared.baseline, full, cfg.success_factor)?;
                Ok((report.cost, excess, verdict))
            })();
            let mut result = TrialResult {
                n,
                m,
                kind: kind.label().to_owned(),
                trial,
                cost: None,
                excess_risk: None,
                outcome: None,
                error: None,
            };
            match outcome {
                Ok((cost, excess, verdict)) => {
                    result.cost = Some(cost);
                    result.excess_risk = Some(excess);
                    result.outcome = Some(verdict);
                }
                Err(e) => result.error = Some(e.to_string()),
            }
            result
        })
        .collect()
}

/// Runs every `(n, m, kind, trial)` combination of `cfg` with up to `jobs`
/// worker threads. The output does not depend on `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let planted = cfg
        .planted()
        .generate(cfg.dataset_size(), derive_seed(cfg.seed, &[STREAM_DATA]))?;
    let full = planted.samples;
    let baseline_seed = derive_seed(cfg.seed, &[STREAM_BASELINE]);
    let baseline = match cfg.task {
        TaskKind::KMeans => Mixture::Dirac(
            kmeans_baseline(&full, cfg.k, cfg.baseline_restarts, baseline_seed)?.model,
        ),
        TaskKind::Gmm => Mixture::Gaussian(
            em_baseline(&full, cfg.k, cfg.baseline_restarts, baseline_seed)?.model,
        ),
    };
    let baseline_risk = super::metrics::risk(&baseline, &full)?;
    let (lower, upper) = full.bounds()?;
    let domain = BoxDomain::new(lower, upper)?;
    let task = match cfg.task {
        TaskKind::KMeans => TaskSpec::kmeans(cfg.k, domain),
        TaskKind::Gmm => TaskSpec::gmm(cfg.k, domain, None),
    };
    let shared = Shared {
        cfg,
        full: &full,
        baseline: &baseline,
        task: &task,
        sigma2: cfg.frequency_variance(),
    };

    let sizes = cfg.sketch_sizes();
    let mut keys = Vec::new();
    for &n in &cfg.n_list {
        for &m in &sizes {
            for trial in 0..cfg.trials {
                keys.push((n, m, trial));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let trials: Vec<TrialResult> = pool.install(|| {
        keys.par_iter()
            .flat_map_iter(|&(n, m, trial)| run_job(&shared, n, m, trial))
            .collect()
    });

    let kd = (cfg.k * cfg.d) as f64;
    let mut cells = Vec::new();
    for &n in &cfg.n_list {
        for &m in &sizes {
            for kind in &cfg.kinds {
                let label = kind.label();
                let runs: Vec<&TrialResult> = trials
                    .iter()
                    .filter(|t| t.n == n && t.m == m && t.kind == label)
                    .collect();
                let mut excess: Vec<f64> = runs.iter().filter_map(|t| t.excess_risk).collect();
                let evaluable: Vec<Outcome> = runs
                    .iter()
                    .filter_map(|t| t.outcome)
                    .filter(|o| *o != Outcome::NotEvaluable)
                    .collect();
                let successes = evaluable.iter().filter(|o| **o == Outcome::Success).count();
                cells.push(CellResult {
                    task: cfg.task.label().to_owned(),
                    m,
                    m_over_kd: m as f64 / kd,
                    kind: label.to_owned(),
                    n,
                    median_excess: median(&mut excess),
                    success_rate: if evaluable.is_empty() {
                        f64::NAN
                    } else {
                        successes as f64 / evaluable.len() as f64
                    },
                    trials: runs.len(),
                    errors: runs.iter().filter(|t| t.error.is_some()).count(),
                    not_evaluable: runs
                        .iter()
                        .filter(|t| t.outcome == Some(Outcome::NotEvaluable))
                        .count(),
                });
            }
        }
    }
    Ok(ExperimentResult {
        cells,
        trials,
        baseline_risk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            k: 2,
            d: 2,
            n_list: vec![200],
            m_list: vec![40],
            m_over_kd: Vec::new(),
            kinds: vec![PeriodicFunction::ComplexExponential],
            trials: 1,
            baseline_restarts: 2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_cell() {
        let result = run_experiment(&small(), 1).unwrap();
        assert_eq!(result.cells.len(), 1);
        let mut out = Vec::new();
        result.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "task,m,m_over_Kd,kind,n,median_excess,success_rate,trials");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("kmeans,40,10.0,rff,200,"));
    }

    #[test]
    fn deterministic_across_jobs() {
        let cfg = ExperimentConfig {
            kinds: vec![PeriodicFunction::ComplexExponential, PeriodicFunction::UniversalQuantizer],
            trials: 2,
            n_list: vec![50, 200],
            ..small()
        };
        let csv = |jobs| {
            let mut out = Vec::new();
            let r = run_experiment(&cfg, jobs).unwrap();
            r.write_csv(&mut out).unwrap();
            r.write_trials_csv(&mut out).unwrap();
            out
        };
        let a = csv(1);
        assert_eq!(a, csv(1));
        assert_eq!(a, csv(2));
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"task": "gmm", "K": 3, "d": 2, "kinds": ["rff", "quantized"]}"#).unwrap();
        assert_eq!(cfg.sketch_sizes(), vec![12, 60]);
        assert_eq!(cfg.frequency_variance(), 200.0);
        assert!(cfg.validate().is_ok());
        assert!(ExperimentConfig { trials: 0, ..small() }.validate().is_err());
        assert!(ExperimentConfig { success_factor: 1.0, ..small() }.validate().is_err());
        assert!(ExperimentConfig { n_list: vec![1], ..small() }.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn median_rule() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
