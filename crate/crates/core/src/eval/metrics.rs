//! Task risks, empirical excess risk and success scoring.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{DiracMixture, GaussianMixture, Mixture};

/// Success factor used throughout the experiments.
pub const DEFAULT_SUCCESS_FACTOR: f64 = 1.2;

fn check_dim(data: &Dataset, dim: usize) -> Result<()> {
    if data.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: data.dim(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum over samples of the squared distance to the nearest centroid.
pub fn sse(model: &DiracMixture, data: &Dataset) -> Result<f64> {
    check_dim(data, model.dim())?;
    Ok(data
        .rows()
        .map(|x| {
            model
                .centroids
                .iter()
                .map(|c| squared_distance(x, c))
                .fold(f64::INFINITY, f64::min)
        })
        .sum())
}

/// `log(w_k N(x; μ_k, diag γ_k))` for every component.
pub(crate) fn component_log_densities(model: &GaussianMixture, x: &[f64], out: &mut [f64]) {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    for (k, o) in out.iter_mut().enumerate() {
        let mut s = model.weights[k].ln();
        for ((xi, mu), var) in x.iter().zip(&model.means[k]).zip(&model.variances[k]) {
            s -= half_log_2pi + 0.5 * var.ln() + 0.5 * (xi - mu) * (xi - mu) / var;
        }
        *o = s;
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-likelihood `Σ_i log Σ_k w_k N(x_i; μ_k, diag γ_k)`.
pub fn log_likelihood(model: &GaussianMixture, data: &Dataset) -> Result<f64> {
    check_dim(data, model.dim())?;
    let mut buf = vec![0.0; model.k()];
    Ok(data
        .rows()
        .map(|x| {
            component_log_densities(model, x, &mut buf);
            log_sum_exp(&buf)
        })
        .sum())
}

/// Task risk: SSE for k-means, negative log-likelihood for GMM.
pub fn risk(model: &Mixture, data: &Dataset) -> Result<f64> {
    match model {
        Mixture::Dirac(m) => sse(m, data),
        Mixture::Gaussian(m) => log_likelihood(m, data).map(|ll| -ll),
    }
}

fn check_same_task(candidate: &Mixture, baseline: &Mixture) -> Result<()> {
    if candidate.task() != baseline.task() {
        return Err(Error::invalid("candidate and baseline solve different tasks"));
    }
    Ok(())
}

/// `R(candidate) − R(baseline)` on `data`: excess SSE for k-means, excess
/// negative log-likelihood for GMM.
pub fn empirical_excess_risk(candidate: &Mixture, baseline: &Mixture, data: &Dataset) -> Result<f64> {
    check_same_task(candidate, baseline)?;
    Ok(risk(candidate, data)? - risk(baseline, data)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    /// The GMM rule needs a positive baseline log-likelihood.
    NotEvaluable,
}

/// k-means: `SSE(candidate) ≤ factor · SSE(baseline)`. GMM:
/// `LL(candidate) ≥ LL(baseline) / factor`, defined only when
/// `LL(baseline) > 0`.
pub fn success(candidate: &Mixture, baseline: &Mixture, data: &Dataset, factor: f64) -> Result<Outcome> {
    check_same_task(candidate, baseline)?;
    if !(factor > 1.0) {
        return Err(Error::invalid("success factor must exceed 1"));
    }
    let ok = match (candidate, baseline) {
        (Mixture::Dirac(c), Mixture::Dirac(b)) => sse(c, data)? <= factor * sse(b, data)?,
        (Mixture::Gaussian(c), Mixture::Gaussian(b)) => {
            let base = log_likelihood(b, data)?;
            if !(base > 0.0) {
                return Ok(Outcome::NotEvaluable);
            }
            log_likelihood(c, data)? >= base / factor
        }
        _ => unreachable!("tasks checked above"),
    };
    Ok(if ok { Outcome::Success } else { Outcome::Failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
        Dataset::new(d, (0..n * d).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn sse_examples() {
        let centroids = vec![vec![0.0, 1.0], vec![2.0, 3.0]];
        let model = DiracMixture::uniform(centroids.clone()).unwrap();
        assert_eq!(sse(&model, &Dataset::from_rows(&centroids).unwrap()).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = random_data(&mut rng, 30, 3);
        let mean = data.mean();
        let single = DiracMixture::uniform(vec![mean.clone()]).unwrap();
        let trace: f64 = (0..3)
            .map(|l| data.rows().map(|x| (x[l] - mean[l]).powi(2)).sum::<f64>())
            .sum();
        assert!((sse(&single, &data).unwrap() - trace).abs() < 1e-12);

        let model = DiracMixture::uniform((0..4).map(|_| (0..3).map(|_| rng.random()).collect()).collect()).unwrap();
        let mut brute = 0.0;
        for i in 0..data.len() {
            let mut best = f64::INFINITY;
            for c in &model.centroids {
                let mut s = 0.0;
                for l in 0..3 {
                    s += (data.row(i)[l] - c[l]) * (data.row(i)[l] - c[l]);
                }
                best = best.min(s);
            }
            brute += best;
        }
        assert!((sse(&model, &data).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_examples() {
        let standard = GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![vec![1.0]]).unwrap();
        let origin = Dataset::from_rows(&[[0.0]]).unwrap();
        let ll = log_likelihood(&standard, &origin).unwrap();
        assert!((ll - (1.0 / (2.0 * PI).sqrt()).ln()).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = random_data(&mut rng, 25, 2);
        let model = GaussianMixture::new(
            vec![0.3, 0.7],
            vec![vec![0.2, 0.4], vec![0.8, 0.5]],
            vec![vec![0.05, 0.02], vec![0.03, 0.04]],
        )
        .unwrap();
        let single = log_likelihood(&model, &data).unwrap();
        let doubled = log_likelihood(&model, &data.repeat_rows(2)).unwrap();
        assert!((doubled - 2.0 * single).abs() < 1e-10);

        let naive: f64 = data
            .rows()
            .map(|x| {
                (0..2)
                    .map(|k| {
                        let mut p = model.weights[k];
                        for l in 0..2 {
                            let v = model.variances[k][l];
                            let diff = x[l] - model.means[k][l];
                            p *= (-diff * diff / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
                        }
                        p
                    })
                    .sum::<f64>()
                    .ln()
            })
            .sum();
        assert!((single - naive).abs() < 1e-9);
    }

    #[test]
    fn excess_risk_sign_and_value() {
        let data = Dataset::from_rows(&[
            [0.0, 0.0], [0.1, 0.0], [0.0, 0.2], [1.0, 1.0], [1.1, 0.9],
            [0.9, 1.2], [0.5, 0.5], [0.2, 0.1], [1.0, 0.8], [0.05, 0.05],
        ])
        .unwrap();
        let good = Mixture::Dirac(DiracMixture::uniform(vec![vec![0.05, 0.05], vec![1.0, 1.0]]).unwrap());
        let bad = Mixture::Dirac(DiracMixture::uniform(vec![vec![0.5, 0.5], vec![1.0, 1.0]]).unwrap());
        assert_eq!(empirical_excess_risk(&good, &good, &data).unwrap(), 0.0);
        let excess = empirical_excess_risk(&bad, &good, &data).unwrap();
        assert!(excess > 0.0);
        // hand evaluation of the two SSEs
        let sse_of = |c: [[f64; 2]; 2]| -> f64 {
            data.rows()
                .map(|x| {
                    c.iter()
                        .map(|c| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum()
        };
        let direct = sse_of([[0.5, 0.5], [1.0, 1.0]]) - sse_of([[0.05, 0.05], [1.0, 1.0]]);
        assert!((excess - direct).abs() < 1e-12);
    }

    #[test]
    fn success_thresholds() {
        let data = Dataset::from_rows(&[[0.0], [1.0]]).unwrap();
        // SSE(baseline) = 0.5
        let base = Mixture::Dirac(DiracMixture::uniform(vec![vec![0.5]]).unwrap());
        let with_offset = |sse_ratio: f64| {
            // SSE(c) = 2 (c − 0.5)² + 0.5
            let delta = ((sse_ratio * 0.5 - 0.5) / 2.0).sqrt();
            Mixture::Dirac(DiracMixture::uniform(vec![vec![0.5 + delta]]).unwrap())
        };
        assert_eq!(success(&base, &base, &data, 1.2).unwrap(), Outcome::Success);
        assert_eq!(success(&with_offset(1.19), &base, &data, 1.2).unwrap(), Outcome::Success);
        assert_eq!(success(&with_offset(1.21), &base, &data, 1.2).unwrap(), Outcome::Failure);

        let wide = Mixture::Gaussian(GaussianMixture::new(vec![1.0], vec![vec![0.5]], vec![vec![1.0]]).unwrap());
        assert_eq!(success(&wide, &wide, &data, 1.2).unwrap(), Outcome::NotEvaluable);
        assert!(success(&wide, &base, &data, 1.2).is_err());
    }

    #[test]
    fn gmm_success_plug_in() {
        // LL(baseline) = 10, LL(candidate) = 8.4 ≥ 10 / 1.2
        let ll_target = |ll: f64| {
            // one sample at the mean of a 1-d Gaussian: LL = −½ log(2πv)
            let v = (-2.0 * ll).exp() / (2.0 * PI);
            Mixture::Gaussian(GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![vec![v]]).unwrap())
        };
        let data = Dataset::from_rows(&[[0.0]]).unwrap();
        assert_eq!(success(&ll_target(8.4), &ll_target(10.0), &data, 1.2).unwrap(), Outcome::Success);
        assert_eq!(success(&ll_target(8.3), &ll_target(10.0), &data, 1.2).unwrap(), Outcome::Failure);
    }
}
