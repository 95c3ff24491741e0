//! Numerical checks of the guarantees for asymmetric sketching: the
//! (sketched) limited projected distortion between a periodic map and its
//! random Fourier reference, the suboptimality certificate of asymmetric
//! sketch matching, the frequency smoothness constant and the expected
//! constant shift between asymmetric and symmetric costs.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::{sample_dither, FeatureMap};
use crate::models::{sketch_model, BoxDomain, Mixture};
use crate::periodic::{PeriodicFunction, PeriodicKind};
use crate::sketch::{sketch_dataset, Sketch};
use crate::solver::cost_values;

/// Largest observed projected distortion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpdReport {
    pub eps_hat: f64,
    pub pairs_tested: usize,
    pub m: usize,
    pub f_kind: PeriodicKind,
    pub seed: u64,
}

fn check_pair(phi: &FeatureMap, psi: &FeatureMap) -> Result<()> {
    if !phi.is_rff() {
        return Err(Error::IncomparableMaps(
            "the reference map must use random Fourier features".into(),
        ));
    }
    if !phi.shares_frequencies(psi) {
        return Err(Error::IncomparableMaps(
            "maps use different frequencies or dither".into(),
        ));
    }
    if !psi.is_rff() && !psi.renormalize() {
        return Err(Error::IncomparableMaps(
            "the distorted map must be renormalized by its first Fourier coefficient".into(),
        ));
    }
    Ok(())
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// `|⟨Ψ(x) − Φ(x), Φ(y)⟩|`.
fn pair_distortion(phi: &FeatureMap, psi: &FeatureMap, x: &[f64], y: &[f64]) -> Result<f64> {
    let px = phi.apply(x)?;
    let qx = psi.apply(x)?;
    let py = phi.apply(y)?;
    let diff: Vec<Complex64> = qx.iter().zip(&px).map(|(a, b)| a - b).collect();
    Ok(inner(&diff, &py).norm())
}

/// Largest `|⟨Ψ(x) − Φ(x), Φ(y)⟩|` over `pairs` uniform pairs of the box.
pub fn slpd_error(
    phi: &FeatureMap,
    psi: &FeatureMap,
    domain: &BoxDomain,
    pairs: usize,
    seed: u64,
) -> Result<LpdReport> {
    check_pair(phi, psi)?;
    if domain.dim() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: phi.dim(),
            found: domain.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs)
        .map(|_| (domain.sample(&mut rng), domain.sample(&mut rng)))
        .collect();
    let eps_hat = points
        .par_iter()
        .map(|(x, y)| pair_distortion(phi, psi, x, y))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok(LpdReport {
        eps_hat,
        pairs_tested: pairs,
        m: phi.sketch_size(),
        f_kind: psi.nonlinearity().kind(),
        seed,
    })
}

fn weighted_sketch(map: &FeatureMap, points: &Dataset, weights: &[f64]) -> Result<Vec<Complex64>> {
    let mut acc = vec![Complex64::new(0.0, 0.0); map.sketch_size()];
    for (x, w) in points.rows().zip(weights) {
        for (a, v) in acc.iter_mut().zip(map.apply(x)?) {
            *a += *w * v;
        }
    }
    Ok(acc)
}

/// Largest `|⟨A_Ψ(P) − A_Φ(P), A_Φ(Q)⟩|` over `models`, for the discrete
/// distribution `P` putting mass `weights[i]` on row `i` of `points`.
pub fn lpd_error_discrete(
    phi: &FeatureMap,
    psi: &FeatureMap,
    points: &Dataset,
    weights: &[f64],
    models: &[Mixture],
) -> Result<f64> {
    check_pair(phi, psi)?;
    if weights.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: weights.len(),
        });
    }
    if points.dim() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: phi.dim(),
            found: points.dim(),
        });
    }
    let a_phi = weighted_sketch(phi, points, weights)?;
    let a_psi = weighted_sketch(psi, points, weights)?;
    let diff: Vec<Complex64> = a_psi.iter().zip(&a_phi).map(|(a, b)| a - b).collect();
    models.iter().try_fold(0.0, |best: f64, q| {
        Ok(best.max(inner(&diff, &sketch_model(phi, q)?).norm()))
    })
}

/// `C_Φ (C_Φ + C_Ψ)`, where `C` is the sup-norm of the (renormalized)
/// nonlinearity: a bound on every projected distortion.
pub fn lpd_bound(phi: &FeatureMap, psi: &FeatureMap) -> Result<f64> {
    let sup = |map: &FeatureMap| -> Result<f64> {
        let f = map.nonlinearity();
        if map.renormalize() {
            f.distortion_constant().map(|c| c - 1.0)
        } else {
            Ok(f.sup_norm())
        }
    };
    let c_phi = sup(phi)?;
    Ok(c_phi * (c_phi + sup(psi)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Report {
    /// `cost(θ̂′; z_sym) − cost(θ̂; z_sym)`.
    pub lhs: f64,
    /// `2 √ε̂`.
    pub rhs: f64,
    pub holds: bool,
    pub eps_hat: f64,
    /// Grid index of the symmetric minimizer `θ̂`.
    pub symmetric_argmin: usize,
    /// Grid index of the asymmetric minimizer `θ̂′`.
    pub asymmetric_argmin: usize,
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Checks that the asymmetric matching minimizer over a finite grid is at
/// most `2√ε̂` worse, in symmetric cost, than the symmetric minimizer, with
/// `ε̂` the largest projected distortion of the data over the grid.
pub fn lemma2_check(
    phi: &FeatureMap,
    psi: &FeatureMap,
    z_sym: &Sketch,
    z_asym: &Sketch,
    grid: &[Mixture],
) -> Result<Lemma2Report> {
    check_pair(phi, psi)?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if z_sym.map_hash() != phi.hash() || z_asym.map_hash() != psi.hash() {
        return Err(Error::IncompatibleSketch(
            "sketches were not produced by the given maps".into(),
        ));
    }
    if z_sym.count() != z_asym.count() {
        return Err(Error::IncompatibleSketch(
            "sketches summarize different numbers of samples".into(),
        ));
    }
    let diff: Vec<Complex64> = z_asym
        .values()
        .iter()
        .zip(z_sym.values())
        .map(|(a, b)| a - b)
        .collect();
    let mut sym = Vec::with_capacity(grid.len());
    let mut asym = Vec::with_capacity(grid.len());
    let mut eps_hat: f64 = 0.0;
    for model in grid {
        let a = sketch_model(phi, model)?;
        eps_hat = eps_hat.max(inner(&diff, &a).norm());
        sym.push(cost_values(phi, z_sym.values(), model)?);
        asym.push(cost_values(phi, z_asym.values(), model)?);
    }
    let best = argmin(&sym);
    let chosen = argmin(&asym);
    let lhs = sym[chosen] - sym[best];
    let rhs = 2.0 * eps_hat.sqrt();
    Ok(Lemma2Report {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-12,
        eps_hat,
        symmetric_argmin: best,
        asymmetric_argmin: chosen,
    })
}

/// `max_{‖a‖=1} E|ωᵀa|` for `ω ~ N(0, σ² I)`, which is `σ √(2/π)`.
pub fn smoothness_constant_gaussian(sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid("sigma2 must be positive"));
    }
    Ok((sigma2 * 2.0 / PI).sqrt())
}

/// Monte Carlo estimate, over dither draws, of the shift between
/// asymmetric and symmetric costs at several models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostShiftReport {
    pub draws: usize,
    /// Mean over draws of `cost²(θ; z_Ψ) − cost²(θ; z_Φ)`, per model.
    pub squared_shift: Vec<f64>,
    /// Mean over draws of `cost(θ; z_Ψ) − cost(θ; z_Φ)`, per model.
    pub unsquared_shift: Vec<f64>,
    /// Per model, `|mean of (D_θ − D̄)|` where `D̄` averages the squared
    /// shifts over models within each draw.
    pub squared_deviation: Vec<f64>,
    /// Monte Carlo standard error of each entry of `squared_deviation`.
    pub squared_std_error: Vec<f64>,
    /// Same as `squared_deviation` for the unsquared shift.
    pub unsquared_deviation: Vec<f64>,
    pub unsquared_std_error: Vec<f64>,
}

impl CostShiftReport {
    /// Largest squared-shift deviation in units of its standard error.
    pub fn max_squared_sigmas(&self) -> f64 {
        ratio(&self.squared_deviation, &self.squared_std_error)
    }

    pub fn max_unsquared_sigmas(&self) -> f64 {
        ratio(&self.unsquared_deviation, &self.unsquared_std_error)
    }
}

fn ratio(dev: &[f64], se: &[f64]) -> f64 {
    dev.iter()
        .zip(se)
        .map(|(d, s)| if *s > 0.0 { d / s } else if *d > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max)
}

/// Running mean and variance.
#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        if self.n < 2.0 {
            return f64::INFINITY;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Draws `draws` uniform dithers for the frequencies of `reference`, and
/// for each compares the symmetric cost (random Fourier features) with the
/// asymmetric one (`f`, renormalized) at every model.
///
/// In expectation over the dither the squared costs differ by a constant
/// independent of the model, so the per-model deviations from the
/// across-model mean are pure Monte Carlo noise.
pub fn cost_shift(
    reference: &FeatureMap,
    f: &PeriodicFunction,
    data: &Dataset,
    models: &[Mixture],
    draws: usize,
    seed: u64,
) -> Result<CostShiftReport> {
    if models.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if draws < 2 {
        return Err(Error::invalid("at least two dither draws are needed"));
    }
    let m = reference.sketch_size();
    let k = models.len();
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let draw_seeds: Vec<u64> = (0..draws).map(|_| seeds.random()).collect();

    let per_draw = |s: u64| -> Result<(Vec<f64>, Vec<f64>)> {
        let dither = sample_dither(m, s)?;
        let phi = FeatureMap::from_parts(
            reference.frequencies().clone(),
            dither.clone(),
            PeriodicFunction::ComplexExponential,
            false,
        )?;
        let psi = FeatureMap::from_parts(reference.frequencies().clone(), dither, f.clone(), true)?;
        let z_phi = sketch_dataset(&phi, data)?;
        let z_psi = sketch_dataset(&psi, data)?;
        let mut squared = Vec::with_capacity(k);
        let mut plain = Vec::with_capacity(k);
        for model in models {
            let c_phi = cost_values(&phi, z_phi.values(), model)?;
            let c_psi = cost_values(&phi, z_psi.values(), model)?;
            squared.push(c_psi * c_psi - c_phi * c_phi);
            plain.push(c_psi - c_phi);
        }
        Ok((squared, plain))
    };
    let results: Vec<(Vec<f64>, Vec<f64>)> =
        draw_seeds.par_iter().map(|&s| per_draw(s)).collect::<Result<_>>()?;

    let mut sq_mean = vec![Moments::default(); k];
    let mut sq_dev = vec![Moments::default(); k];
    let mut un_mean = vec![Moments::default(); k];
    let mut un_dev = vec![Moments::default(); k];
    for (squared, plain) in &results {
        let sq_avg = squared.iter().sum::<f64>() / k as f64;
        let un_avg = plain.iter().sum::<f64>() / k as f64;
        for i in 0..k {
            sq_mean[i].push(squared[i]);
            sq_dev[i].push(squared[i] - sq_avg);
            un_mean[i].push(plain[i]);
            un_dev[i].push(plain[i] - un_avg);
        }
    }
    Ok(CostShiftReport {
        draws,
        squared_shift: sq_mean.iter().map(|s| s.mean).collect(),
        unsquared_shift: un_mean.iter().map(|s| s.mean).collect(),
        squared_deviation: sq_dev.iter().map(|s| s.mean.abs()).collect(),
        squared_std_error: sq_dev.iter().map(Moments::std_error).collect(),
        unsquared_deviation: un_dev.iter().map(|s| s.mean.abs()).collect(),
        unsquared_std_error: un_dev.iter().map(Moments::std_error).collect(),
    })
}
