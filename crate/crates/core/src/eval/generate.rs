//! Planted Gaussian mixtures and samples drawn from them.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::GaussianMixture;

/// Rejection rounds allowed when placing the means.
pub const PLACEMENT_ROUNDS: usize = 1000;

/// Dirichlet concentration of the mixture weights.
const WEIGHT_CONCENTRATION: f64 = 20.0;

/// Parameters of the planted mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedMixture {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    /// Minimum pairwise mean distance, in units of the average component
    /// standard deviation.
    pub separation: f64,
    /// Average component standard deviation.
    pub component_std: f64,
    /// Component standard deviations are drawn uniformly in
    /// `component_std · [1 − spread, 1 + spread]`.
    pub std_spread: f64,
}

impl Default for PlantedMixture {
    fn default() -> Self {
        Self {
            k: 10,
            d: 5,
            separation: 5.0,
            component_std: 0.04,
            std_spread: 0.25,
        }
    }
}

/// Samples with their generating mixture and component labels.
#[derive(Clone, Debug)]
pub struct PlantedData {
    pub samples: Dataset,
    pub truth: GaussianMixture,
    pub labels: Vec<usize>,
}

impl PlantedMixture {
    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 {
            return Err(Error::invalid("K and d must be positive"));
        }
        if !(self.component_std > 0.0) || !(self.separation >= 0.0) {
            return Err(Error::invalid("component std must be positive and separation nonnegative"));
        }
        if !(0.0..1.0).contains(&self.std_spread) {
            return Err(Error::invalid("std spread must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Draws the mixture: means uniform in the unit box at least
    /// `separation · component_std` apart, isotropic variances and
    /// near-uniform Dirichlet weights.
    pub fn draw_mixture<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GaussianMixture> {
        self.validate()?;
        let min_dist = self.separation * self.component_std;
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(self.k);
        let mut rounds = 0;
        while means.len() < self.k {
            if rounds == PLACEMENT_ROUNDS {
                return Err(Error::InfeasibleSeparation(PLACEMENT_ROUNDS));
            }
            rounds += 1;
            means.clear();
            for _ in 0..self.k * 100 {
                let candidate: Vec<f64> = (0..self.d).map(|_| rng.random()).collect();
                let far = means.iter().all(|m| {
                    m.iter().zip(&candidate).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                        >= min_dist * min_dist
                });
                if far {
                    means.push(candidate);
                    if means.len() == self.k {
                        break;
                    }
                }
            }
        }
        let gamma = Gamma::new(WEIGHT_CONCENTRATION, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
        let raw: Vec<f64> = (0..self.k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();
        let variances = (0..self.k)
            .map(|_| {
                let s = self.component_std * (1.0 + self.std_spread * (2.0 * rng.random::<f64>() - 1.0));
                vec![s * s; self.d]
            })
            .collect();
        GaussianMixture::new(weights, means, variances)
    }

    /// Draws a mixture and `n ≥ K` samples. The first `K` samples come one
    /// from each component; the rest follow the mixture weights.
    pub fn generate(&self, n: usize, seed: u64) -> Result<PlantedData> {
        if n < self.k {
            return Err(Error::invalid(format!("n = {n} is smaller than K = {}", self.k)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = self.draw_mixture(&mut rng)?;
        let picker = WeightedIndex::new(&truth.weights).map_err(|e| Error::invalid(e.to_string()))?;
        let mut values = Vec::with_capacity(n * self.d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = if i < self.k { i } else { picker.sample(&mut rng) };
            labels.push(k);
            for (mu, var) in truth.means[k].iter().zip(&truth.variances[k]) {
                let g: f64 = StandardNormal.sample(&mut rng);
                values.push(mu + var.sqrt() * g);
            }
        }
        Ok(PlantedData {
            samples: Dataset::new(self.d, values)?,
            truth,
            labels,
        })
    }
}

/// Samples from a planted mixture of `k` isotropic Gaussians in the unit
/// cube of dimension `d`, with default component scale.
pub fn generate_gmm_data(
    k: usize,
    d: usize,
    n: usize,
    separation: f64,
    seed: u64,
) -> Result<PlantedData> {
    PlantedMixture {
        k,
        d,
        separation,
        ..PlantedMixture::default()
    }
    .generate(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_per_mode() {
        let data = generate_gmm_data(10, 5, 10, 5.0, 3).unwrap();
        for (i, x) in data.samples.rows().enumerate() {
            assert_eq!(data.labels[i], i);
            let sigma = data.truth.variances[i][0].sqrt();
            let dist = x
                .iter()
                .zip(&data.truth.means[i])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(dist <= 6.0 * sigma);
        }
    }

    #[test]
    fn seeded_and_separated() {
        let spec = PlantedMixture::default();
        let a = spec.generate(200, 9).unwrap();
        let b = spec.generate(200, 9).unwrap();
        assert_eq!(a.samples, b.samples);
        let min_dist = spec.separation * spec.component_std;
        for i in 0..spec.k {
            for j in 0..i {
                let d2: f64 = a.truth.means[i]
                    .iter()
                    .zip(&a.truth.means[j])
                    .map(|(x, y)| (x - y).powi(2))
                    .sum();
                assert!(d2.sqrt() >= min_dist);
            }
        }
        assert!((a.truth.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_mean_is_close() {
        let n = 20_000;
        let data = generate_gmm_data(4, 3, n, 4.0, 1).unwrap();
        let empirical = data.samples.mean();
        for (l, e) in empirical.iter().enumerate() {
            let truth: f64 = data
                .truth
                .weights
                .iter()
                .zip(&data.truth.means)
                .map(|(w, m)| w * m[l])
                .sum();
            assert!((e - truth).abs() <= 5.0 / (n as f64).sqrt(), "{e} vs {truth}");
        }
    }

    #[test]
    fn impossible_separation() {
        assert!(matches!(
            generate_gmm_data(50, 2, 100, 1000.0, 0),
            Err(Error::InfeasibleSeparation(PLACEMENT_ROUNDS))
        ));
        assert!(generate_gmm_data(5, 2, 4, 2.0, 0).is_err());
    }
}
