//! Sketch matching: fitting a mixture whose analytic sketch is closest to a
//! dataset sketch in Euclidean norm.
//!
//! The cost is the same for symmetric sketches (made with the random Fourier
//! feature map used for learning) and asymmetric ones (made with a
//! renormalized periodic map sharing its frequencies and dither), so every
//! solver accepts either kind of sketch.
//!
//! Two greedy heuristics approximate the minimizer: CLOMP, optionally with
//! replacement (CLOMPR: twice as many atom additions, each followed by hard
//! thresholding back to `K` atoms), and Gaussian splitting.

mod descent;
mod problem;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::models::{sketch_model, sketch_model_gradient, BoxDomain, Mixture, TaskKind};
use crate::sketch::Sketch;

pub use descent::{project_simplex, projected_descent, DescentOutcome, DescentSettings};
use problem::{norm, Constraint, Problem};

/// Learning problem: task, number of components and feasible set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "box")]
    pub domain: BoxDomain,
    /// Variance cap `S` for GMM; defaults to `‖u − l‖∞²`.
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub variance_cap: Option<f64>,
}

impl TaskSpec {
    pub fn kmeans(k: usize, domain: BoxDomain) -> Self {
        Self {
            kind: TaskKind::KMeans,
            k,
            domain,
            variance_cap: None,
        }
    }

    pub fn gmm(k: usize, domain: BoxDomain, variance_cap: Option<f64>) -> Self {
        Self {
            kind: TaskKind::Gmm,
            k,
            domain,
            variance_cap,
        }
    }

    pub fn variance_cap(&self) -> f64 {
        self.variance_cap.unwrap_or_else(|| {
            let w = self.domain.width();
            if w > 0.0 {
                w * w
            } else {
                1.0
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InfeasibleTask("K must be at least 1".into()));
        }
        // re-check the box in case it was deserialized
        BoxDomain::new(self.domain.lower().to_vec(), self.domain.upper().to_vec())?;
        if self.kind == TaskKind::Gmm && !(self.variance_cap() >= self.domain.variance_floor()) {
            return Err(Error::InfeasibleTask(format!(
                "variance cap {} is below the variance floor {}",
                self.variance_cap(),
                self.domain.variance_floor()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverVariant {
    Clomp,
    Clompr,
    Splitting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub variant: SolverVariant,
    /// Random initializations tried by every atom search.
    pub restarts: usize,
    /// Independent runs of the whole solver; the lowest-cost one is kept.
    pub replicates: usize,
    /// Iteration cap of each projected-gradient run.
    pub inner_max_iters: usize,
    pub gradient_tolerance: f64,
    pub step_initial: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            variant: SolverVariant::Clompr,
            restarts: 5,
            replicates: 1,
            inner_max_iters: 300,
            gradient_tolerance: 1e-10,
            step_initial: 1.0,
            seed: 0,
        }
    }
}

impl SolverOptions {
    /// CLOMPR below 16 components, splitting from 16 on (GMM only).
    pub fn default_for(task: &TaskSpec) -> Self {
        let variant = if task.kind == TaskKind::Gmm && task.k >= 16 {
            SolverVariant::Splitting
        } else {
            SolverVariant::Clompr
        };
        Self {
            variant,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.replicates == 0 {
            return Err(Error::invalid("restarts and replicates must be at least 1"));
        }
        if !(self.gradient_tolerance > 0.0) || !(self.step_initial > 0.0) {
            return Err(Error::invalid("tolerances and initial step must be positive"));
        }
        Ok(())
    }

    fn descent(&self) -> DescentSettings {
        DescentSettings {
            max_iters: self.inner_max_iters,
            gradient_tolerance: self.gradient_tolerance,
            step_initial: self.step_initial,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct SolverReport {
    pub model: Mixture,
    /// Final sketch-matching cost `‖z − A_Φ(P_θ)‖₂`.
    pub cost: f64,
    /// Cost of the seeded random starting model (uniform weights, atoms
    /// drawn as in the atom search).
    pub initial_cost: f64,
    pub trace: Vec<TracePoint>,
}

fn check_learning_map(map: &FeatureMap, z: &[Complex64]) -> Result<()> {
    if !map.is_rff() {
        return Err(Error::invalid(
            "the learning map must use random Fourier features",
        ));
    }
    if z.len() != map.sketch_size() {
        return Err(Error::DimensionMismatch {
            expected: map.sketch_size(),
            found: z.len(),
        });
    }
    Ok(())
}

fn check_sketch_source(map: &FeatureMap, z: &Sketch) -> Result<()> {
    check_learning_map(map, z.values())
}

/// `‖z − A_Φ(P_θ)‖₂` for raw sketch values.
pub fn cost_values(map: &FeatureMap, z: &[Complex64], model: &Mixture) -> Result<f64> {
    check_learning_map(map, z)?;
    let a = sketch_model(map, model)?;
    Ok(z.iter()
        .zip(&a)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Sketch-matching cost `‖z − A_Φ(P_θ)‖₂`.
pub fn cost(map: &FeatureMap, z: &Sketch, model: &Mixture) -> Result<f64> {
    check_sketch_source(map, z)?;
    cost_values(map, z.values(), model)
}

/// Gradient of [`cost`] with respect to every free parameter.
#[derive(Clone, Debug)]
pub struct CostGradient {
    pub weights: Vec<f64>,
    pub locations: Vec<Vec<f64>>,
    pub variances: Option<Vec<Vec<f64>>>,
}

/// Closed-form gradient of `‖z − A_Φ(P_θ)‖₂`: `−Re⟨J, r⟩ / ‖r‖` with
/// `r = z − A_Φ(P_θ)`. Undefined (an error) at an exact match.
pub fn cost_gradient(map: &FeatureMap, z: &[Complex64], model: &Mixture) -> Result<CostGradient> {
    check_learning_map(map, z)?;
    let a = sketch_model(map, model)?;
    let r: Vec<Complex64> = z.iter().zip(&a).map(|(x, y)| x - y).collect();
    let norm = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Numerical("cost is not differentiable at zero residual".into()));
    }
    let jac = sketch_model_gradient(map, model)?;
    let project = |col: &[Complex64]| -> f64 {
        -col.iter()
            .zip(&r)
            .map(|(c, v)| (c.conj() * v).re)
            .sum::<f64>()
            / norm
    };
    Ok(CostGradient {
        weights: jac.weights.iter().map(|c| project(c)).collect(),
        locations: jac
            .locations
            .iter()
            .map(|per_dim| per_dim.iter().map(|c| project(c)).collect())
            .collect(),
        variances: jac.variances.as_ref().map(|v| {
            v.iter()
                .map(|per_dim| per_dim.iter().map(|c| project(c)).collect())
                .collect()
        }),
    })
}

/// Runs the solver selected by `opts.variant` `opts.replicates` times and
/// keeps the run with the lowest final cost. The first run uses `opts.seed`.
pub fn solve(
    z: &Sketch,
    map: &FeatureMap,
    task: &TaskSpec,
    opts: &SolverOptions,
) -> Result<SolverReport> {
    opts.validate()?;
    let mut best: Option<SolverReport> = None;
    for replicate in 0..opts.replicates as u64 {
        let run = SolverOptions {
            seed: opts.seed ^ replicate.wrapping_mul(0x9e37_79b9_7f4a_7c15),
            ..opts.clone()
        };
        let report = match opts.variant {
            SolverVariant::Clomp | SolverVariant::Clompr => clomp(z, map, task, &run)?,
            SolverVariant::Splitting => gaussian_splitting(z, map, task, &run)?,
        };
        if best.as_ref().is_none_or(|b| report.cost < b.cost) {
            best = Some(report);
        }
    }
    Ok(best.expect("replicates >= 1"))
}

fn prepare<'a>(
    z: &'a Sketch,
    map: &'a FeatureMap,
    task: &TaskSpec,
    opts: &SolverOptions,
) -> Result<Problem<'a>> {
    task.validate()?;
    opts.validate()?;
    check_sketch_source(map, z)?;
    if task.domain.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            found: task.domain.dim(),
        });
    }
    Ok(Problem::new(map, z.values(), task))
}

/// Greedy CLOMP / CLOMPR sketch matching.
///
/// Each outer step (1) adds the atom best correlated with the residual,
/// found by projected gradient ascent from `opts.restarts` random starts in
/// the box; (2) for CLOMPR, once more than `K` atoms are held, keeps the `K`
/// atoms with largest nonnegative least-squares weights on normalized atom
/// sketches; (3) refits the weights by nonnegative least squares; (4)
/// refines all atoms and weights jointly. A final joint refinement keeps
/// the weights on the probability simplex.
pub fn clomp(
    z: &Sketch,
    map: &FeatureMap,
    task: &TaskSpec,
    opts: &SolverOptions,
) -> Result<SolverReport> {
    if opts.variant == SolverVariant::Splitting {
        return Err(Error::invalid("use gaussian_splitting for the splitting variant"));
    }
    let problem = prepare(z, map, task, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let initial_cost = problem.random_model_cost(&mut rng, task.k);
    let settings = opts.descent();

    let steps = match opts.variant {
        SolverVariant::Clompr => 2 * task.k,
        _ => task.k,
    };
    let mut atoms: Vec<Vec<f64>> = Vec::with_capacity(task.k + 1);
    let mut weights: Vec<f64> = Vec::new();
    let mut residual = z.values().to_vec();
    let mut trace = Vec::with_capacity(steps + 1);

    for step in 0..steps {
        let atom = problem.search_atom(&residual, opts.restarts, &mut rng, &settings);
        atoms.push(atom);
        if atoms.len() > task.k {
            let keep = problem.hard_threshold(&atoms, task.k);
            atoms = keep.into_iter().map(|i| atoms[i].clone()).collect();
        }
        weights = problem.nnls(&atoms);
        problem.refine(&mut weights, &mut atoms, Constraint::Nonnegative, &settings);
        residual = problem.residual(&weights, &atoms);
        trace.push(TracePoint {
            iteration: step + 1,
            cost: norm(&residual),
        });
    }

    finish(&problem, weights, atoms, initial_cost, trace, &settings)
}

/// Gaussian splitting: fit one Gaussian, then repeatedly split the
/// component with the largest total variance along its widest axis (means
/// at `±√γ_max`, that variance halved) and refine jointly, until `K`
/// components are reached.
pub fn gaussian_splitting(
    z: &Sketch,
    map: &FeatureMap,
    task: &TaskSpec,
    opts: &SolverOptions,
) -> Result<SolverReport> {
    if task.kind != TaskKind::Gmm {
        return Err(Error::invalid("Gaussian splitting needs a GMM task"));
    }
    let problem = prepare(z, map, task, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let initial_cost = problem.random_model_cost(&mut rng, task.k);
    let settings = opts.descent();

    let first = problem.search_atom(z.values(), opts.restarts, &mut rng, &settings);
    let mut atoms = vec![first];
    let mut weights = problem.nnls(&atoms);
    problem.refine(&mut weights, &mut atoms, Constraint::Nonnegative, &settings);
    let mut trace = vec![TracePoint {
        iteration: 1,
        cost: norm(&problem.residual(&weights, &atoms)),
    }];

    while atoms.len() < task.k {
        let (widest, axis) = problem.widest_component(&atoms);
        let (left, right) = problem.split(&atoms[widest], axis);
        let w = weights[widest] / 2.0;
        atoms[widest] = left;
        weights[widest] = w;
        atoms.push(right);
        weights.push(w);
        problem.refine(&mut weights, &mut atoms, Constraint::Nonnegative, &settings);
        trace.push(TracePoint {
            iteration: atoms.len(),
            cost: norm(&problem.residual(&weights, &atoms)),
        });
    }

    finish(&problem, weights, atoms, initial_cost, trace, &settings)
}

fn finish(
    problem: &Problem<'_>,
    mut weights: Vec<f64>,
    mut atoms: Vec<Vec<f64>>,
    initial_cost: f64,
    mut trace: Vec<TracePoint>,
    settings: &DescentSettings,
) -> Result<SolverReport> {
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        let k = weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = 1.0 / k);
    }
    problem.refine(&mut weights, &mut atoms, Constraint::Simplex, settings);
    // exact renormalization after floating-point projection
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let model = problem.to_mixture(&weights, &atoms)?;
    let cost = norm(&problem.residual(&weights, &atoms));
    if !cost.is_finite() {
        return Err(Error::Numerical("solver produced a non-finite cost".into()));
    }
    trace.push(TracePoint {
        iteration: trace.len() + 1,
        cost,
    });
    Ok(SolverReport {
        model,
        cost,
        initial_cost,
        trace,
    })
}
