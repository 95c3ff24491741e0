//! Model sets for sketched learning: Dirac mixtures (k-means) and diagonal
//! Gaussian mixtures (GMM), their analytic sketches, box domains and the
//! covering bounds attached to them.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::periodic::PeriodicFunction;

/// Tolerance on `Σ weights = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Axis-aligned box `{x : l <= x <= u}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    #[serde(rename = "l")]
    lower: Vec<f64>,
    #[serde(rename = "u")]
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InfeasibleTask("box has dimension zero".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l <= u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::InfeasibleTask(format!("empty box side [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .collect()
    }

    /// `‖u − l‖∞`.
    pub fn width(&self) -> f64 {
        self.widths().into_iter().fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect()
    }

    /// `[l − ρS, u + ρS]`, the box holding all but a `ζ` fraction of the mass
    /// of any Gaussian centered in `self` with variances at most `S`.
    pub fn extended(&self, rho: f64, variance_cap: f64) -> Result<BoxDomain> {
        if !(rho >= 0.0) || !(variance_cap > 0.0) {
            return Err(Error::invalid("rho must be nonnegative and S positive"));
        }
        let pad = rho * variance_cap;
        Ok(BoxDomain {
            lower: self.lower.iter().map(|l| l - pad).collect(),
            upper: self.upper.iter().map(|u| u + pad).collect(),
        })
    }

    /// Variance floor `1e-8 · ‖u − l‖∞²` shared by the GMM solvers.
    pub fn variance_floor(&self) -> f64 {
        let w = self.width();
        if w > 0.0 {
            1e-8 * w * w
        } else {
            1e-12
        }
    }
}

/// Covering-entropy bound `d · ln(1 + √d ‖u − l‖∞ / ν)` in nats.
pub fn entropy_bound(domain: &BoxDomain, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::invalid("covering radius must be positive"));
    }
    let d = domain.dim() as f64;
    Ok(d * (1.0 + d.sqrt() * domain.width() / nu).ln())
}

/// Explicit tail bound `min(1, d φ(ρ)/ρ)` on the Gaussian mass escaping the
/// box extended by `ρ` standard deviations, `φ` the standard normal density.
pub fn zeta_bound(rho: f64, dim: usize) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::invalid("rho must be positive"));
    }
    let tail = dim as f64 / (rho * (2.0 * PI).sqrt()) * (-rho * rho / 2.0).exp();
    Ok(tail.min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchSizeTask {
    KMeans,
    Gmm { rho: f64, variance_cap: f64 },
}

/// Sketch size `⌈128 ε₀⁻² d ln(1 + c_f √d W / ε₀)⌉` sufficient for the
/// renormalized periodic features of `f`, with `W = ‖u − l‖∞`, widened to
/// `2ρS + ‖u − l‖∞` for GMM.
pub fn required_sketch_size(
    f: &PeriodicFunction,
    smoothness: f64,
    domain: &BoxDomain,
    eps0: f64,
    task: SketchSizeTask,
) -> Result<u64> {
    if !(eps0 > 0.0) {
        return Err(Error::invalid("eps0 must be positive"));
    }
    let c_f = f.covering_constant_with(smoothness, f.lipschitz_constant())?;
    let width = match task {
        SketchSizeTask::KMeans => domain.width(),
        SketchSizeTask::Gmm { rho, variance_cap } => 2.0 * rho * variance_cap + domain.width(),
    };
    let d = domain.dim() as f64;
    let bound = 128.0 / (eps0 * eps0) * d * (1.0 + c_f * d.sqrt() * width / eps0).ln();
    Ok(bound.ceil() as u64)
}

/// Weighted Dirac atoms `Σ α_k δ_{c_k}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracMixture {
    pub weights: Vec<f64>,
    pub centroids: Vec<Vec<f64>>,
}

/// `Σ w_k N(μ_k, diag(γ_k))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Mixture {
    Dirac(DiracMixture),
    Gaussian(GaussianMixture),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[serde(rename = "kmeans", alias = "k-means", alias = "k_means")]
    KMeans,
    Gmm,
}

impl TaskKind {
    pub fn label(self) -> &'static str {
        match self {
            TaskKind::KMeans => "kmeans",
            TaskKind::Gmm => "gmm",
        }
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid("weights must be nonnegative"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

impl DiracMixture {
    pub fn new(weights: Vec<f64>, centroids: Vec<Vec<f64>>) -> Result<Self> {
        let model = Self { weights, centroids };
        model.check_shape()?;
        Ok(model)
    }

    fn check_shape(&self) -> Result<()> {
        if self.weights.len() != self.centroids.len() || self.weights.is_empty() {
            return Err(Error::invalid("need one weight per centroid and K >= 1"));
        }
        let d = self.centroids[0].len();
        if let Some(c) = self.centroids.iter().find(|c| c.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: c.len(),
            });
        }
        Ok(())
    }

    /// Uniform weights over the given centroids.
    pub fn uniform(centroids: Vec<Vec<f64>>) -> Result<Self> {
        let k = centroids.len().max(1);
        Self::new(vec![1.0 / k as f64; centroids.len()], centroids)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Checks weights and that every centroid lies in `domain`.
    pub fn validate(&self, domain: &BoxDomain) -> Result<()> {
        self.check_shape()?;
        check_weights(&self.weights)?;
        if let Some(c) = self.centroids.iter().find(|c| !domain.contains(c)) {
            return Err(Error::invalid(format!("centroid {c:?} lies outside the box")));
        }
        Ok(())
    }
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let model = Self {
            weights,
            means,
            variances,
        };
        model.check_shape()?;
        Ok(model)
    }

    fn check_shape(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::invalid("need matching weights, means, variances and K >= 1"));
        }
        let d = self.means[0].len();
        for v in self.means.iter().chain(&self.variances) {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
        }
        if self.variances.iter().flatten().any(|g| !(*g > 0.0)) {
            return Err(Error::invalid("variances must be positive"));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Checks weights, means in `domain` and variances in
    /// `[floor, variance_cap]`.
    pub fn validate(&self, domain: &BoxDomain, variance_cap: f64) -> Result<()> {
        self.check_shape()?;
        check_weights(&self.weights)?;
        if let Some(mu) = self.means.iter().find(|mu| !domain.contains(mu)) {
            return Err(Error::invalid(format!("mean {mu:?} lies outside the box")));
        }
        let floor = domain.variance_floor();
        if let Some(g) = self
            .variances
            .iter()
            .flatten()
            .find(|g| **g < floor * (1.0 - 1e-12) || **g > variance_cap * (1.0 + 1e-12))
        {
            return Err(Error::invalid(format!(
                "variance {g} outside [{floor}, {variance_cap}]"
            )));
        }
        Ok(())
    }
}

impl Mixture {
    pub fn k(&self) -> usize {
        match self {
            Mixture::Dirac(m) => m.k(),
            Mixture::Gaussian(m) => m.k(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Mixture::Dirac(m) => m.dim(),
            Mixture::Gaussian(m) => m.dim(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            Mixture::Dirac(m) => &m.weights,
            Mixture::Gaussian(m) => &m.weights,
        }
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        match self {
            Mixture::Dirac(m) => &m.centroids,
            Mixture::Gaussian(m) => &m.means,
        }
    }

    pub fn task(&self) -> TaskKind {
        match self {
            Mixture::Dirac(_) => TaskKind::KMeans,
            Mixture::Gaussian(_) => TaskKind::Gmm,
        }
    }
}

/// `(1/√m) e^{i(ω_jᵀμ + ξ_j)} e^{−½ Σ_l ω_{jl}² γ_l}` for every `j`, times
/// `weight`, added to `acc`. Without variances this is the RFF of `μ`.
fn add_rff_atom(
    map: &FeatureMap,
    location: &[f64],
    variances: Option<&[f64]>,
    weight: f64,
    acc: &mut [Complex64],
) {
    let scale = map.output_scale().re * weight;
    let omega = map.frequencies();
    for (j, a) in acc.iter_mut().enumerate() {
        let damping = variances.map_or(1.0, |g| {
            let w = omega.column(j);
            (-0.5 * w.iter().zip(g).map(|(o, v)| o * o * v).sum::<f64>()).exp()
        });
        *a += Complex64::from_polar(scale * damping, map.phase(j, location));
    }
}

fn check_model_dim(map: &FeatureMap, model: &Mixture) -> Result<()> {
    if model.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            found: model.dim(),
        });
    }
    Ok(())
}

/// Analytic sketch `A_Φ(P_θ)` of a mixture.
///
/// Dirac mixtures work with any feature map. Gaussian mixtures need the
/// random Fourier feature map, whose expectation under a Gaussian is known
/// in closed form.
pub fn sketch_model(map: &FeatureMap, model: &Mixture) -> Result<Vec<Complex64>> {
    check_model_dim(map, model)?;
    let mut acc = vec![Complex64::new(0.0, 0.0); map.sketch_size()];
    match model {
        Mixture::Dirac(dirac) => {
            for (w, c) in dirac.weights.iter().zip(&dirac.centroids) {
                map.accumulate(c, *w, &mut acc);
            }
        }
        Mixture::Gaussian(gmm) => {
            if !map.is_rff() {
                return Err(Error::UnsupportedAnalyticSketch(
                    "Gaussian components need random Fourier features",
                ));
            }
            for ((w, mu), g) in gmm.weights.iter().zip(&gmm.means).zip(&gmm.variances) {
                add_rff_atom(map, mu, Some(g), *w, &mut acc);
            }
        }
    }
    Ok(acc)
}

/// Partial derivatives of the model sketch, one `m`-vector per parameter.
#[derive(Clone, Debug)]
pub struct MixtureJacobian {
    /// `∂A/∂w_k`, indexed `[k][j]`.
    pub weights: Vec<Vec<Complex64>>,
    /// `∂A/∂c_{k,l}` (or `∂A/∂μ_{k,l}`), indexed `[k][l][j]`.
    pub locations: Vec<Vec<Vec<Complex64>>>,
    /// `∂A/∂γ_{k,l}` for Gaussian mixtures, indexed `[k][l][j]`.
    pub variances: Option<Vec<Vec<Vec<Complex64>>>>,
}

/// Closed-form Jacobian of [`sketch_model`]. Requires random Fourier
/// features, the only differentiable map.
pub fn sketch_model_gradient(map: &FeatureMap, model: &Mixture) -> Result<MixtureJacobian> {
    check_model_dim(map, model)?;
    if !map.is_rff() {
        return Err(Error::UnsupportedAnalyticSketch(
            "gradients need random Fourier features",
        ));
    }
    let m = map.sketch_size();
    let d = map.dim();
    let omega = map.frequencies();
    let variances: Vec<Option<&[f64]>> = match model {
        Mixture::Dirac(dirac) => vec![None; dirac.k()],
        Mixture::Gaussian(gmm) => gmm.variances.iter().map(|g| Some(g.as_slice())).collect(),
    };
    let mut jac = MixtureJacobian {
        weights: Vec::with_capacity(model.k()),
        locations: Vec::with_capacity(model.k()),
        variances: matches!(model, Mixture::Gaussian(_)).then(Vec::new),
    };
    for (k, (w, loc)) in model.weights().iter().zip(model.locations()).enumerate() {
        let mut atom = vec![Complex64::new(0.0, 0.0); m];
        add_rff_atom(map, loc, variances[k], 1.0, &mut atom);
        let mut dloc = vec![vec![Complex64::new(0.0, 0.0); m]; d];
        let mut dvar = vec![vec![Complex64::new(0.0, 0.0); m]; d];
        for (j, a) in atom.iter().enumerate() {
            let col = omega.column(j);
            for l in 0..d {
                dloc[l][j] = Complex64::new(0.0, col[l] * w) * a;
                dvar[l][j] = -0.5 * col[l] * col[l] * w * a;
            }
        }
        jac.weights.push(atom);
        jac.locations.push(dloc);
        if let Some(v) = jac.variances.as_mut() {
            v.push(dvar);
        }
    }
    Ok(jac)
}

/// On-disk model description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub task: TaskKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroids: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<Vec<f64>>>,
    #[serde(rename = "box")]
    pub domain: BoxDomain,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub variance_cap: Option<f64>,
}

impl ModelFile {
    pub fn new(model: &Mixture, domain: &BoxDomain, variance_cap: Option<f64>) -> Self {
        let (centroids, means, variances) = match model {
            Mixture::Dirac(m) => (Some(m.centroids.clone()), None, None),
            Mixture::Gaussian(m) => (None, Some(m.means.clone()), Some(m.variances.clone())),
        };
        Self {
            task: model.task(),
            k: model.k(),
            d: model.dim(),
            weights: model.weights().to_vec(),
            centroids,
            means,
            variances,
            domain: domain.clone(),
            variance_cap,
        }
    }

    pub fn mixture(&self) -> Result<Mixture> {
        let model = match self.task {
            TaskKind::KMeans => Mixture::Dirac(DiracMixture::new(
                self.weights.clone(),
                self.centroids
                    .clone()
                    .ok_or_else(|| Error::Parse("k-means model without centroids".into()))?,
            )?),
            TaskKind::Gmm => Mixture::Gaussian(GaussianMixture::new(
                self.weights.clone(),
                self.means
                    .clone()
                    .ok_or_else(|| Error::Parse("GMM without means".into()))?,
                self.variances
                    .clone()
                    .ok_or_else(|| Error::Parse("GMM without variances".into()))?,
            )?),
        };
        if model.k() != self.k || model.dim() != self.d {
            return Err(Error::Parse(format!(
                "declared K={} d={} but found K={} d={}",
                self.k,
                self.d,
                model.k(),
                model.dim()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
