//! Classical learners run on the full dataset: k-means++ seeded Lloyd
//! iterations and diagonal-covariance EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{component_log_densities, log_sum_exp, squared_distance};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{BoxDomain, DiracMixture, GaussianMixture};

pub const MAX_ITERS: usize = 300;
/// Stop when the objective changes by less than this fraction.
pub const RELATIVE_TOLERANCE: f64 = 1e-9;

/// Best restart of a baseline.
#[derive(Clone, Debug)]
pub struct BaselineFit<M> {
    pub model: M,
    /// SSE for k-means, log-likelihood for EM.
    pub objective: f64,
    /// Objective after every iteration of the retained restart.
    pub trace: Vec<f64>,
}

fn check_request(data: &Dataset, k: usize, restarts: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || k > data.len() {
        return Err(Error::invalid(format!(
            "K = {k} must lie between 1 and the number of samples {}",
            data.len()
        )));
    }
    if restarts == 0 {
        return Err(Error::invalid("restarts must be at least 1"));
    }
    Ok(())
}

/// k-means++ seeding: each new centroid is a sample drawn with probability
/// proportional to its squared distance to the current centroids.
pub fn kmeans_plus_plus<R: Rng + ?Sized>(data: &Dataset, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(data.row(rng.random_range(0..n)).to_vec());
    let mut nearest: Vec<f64> = data.rows().map(|x| squared_distance(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in nearest.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = data.row(pick).to_vec();
        for (d, x) in nearest.iter_mut().zip(data.rows()) {
            *d = d.min(squared_distance(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(data: &Dataset, mut centroids: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let n = data.len();
    let k = centroids.len();
    let d = data.dim();
    let mut assign = vec![0usize; n];
    let mut nearest = vec![0.0; n];
    let mut trace = Vec::new();
    for iter in 0..MAX_ITERS {
        let mut sse = 0.0;
        for (i, x) in data.rows().enumerate() {
            let (best, dist) = centroids
                .iter()
                .enumerate()
                .map(|(j, c)| (j, squared_distance(x, c)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            assign[i] = best;
            nearest[i] = dist;
            sse += dist;
        }
        let converged = trace
            .last()
            .is_some_and(|prev: &f64| prev - sse <= RELATIVE_TOLERANCE * prev);
        trace.push(sse);
        if converged || sse == 0.0 || iter + 1 == MAX_ITERS {
            break;
        }

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (x, &j) in data.rows().zip(&assign) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            } else {
                // empty cluster: move it to the sample farthest from its centroid
                let far = (0..n)
                    .max_by(|a, b| nearest[*a].total_cmp(&nearest[*b]).then(b.cmp(a)))
                    .unwrap_or(0);
                centroids[j] = data.row(far).to_vec();
                nearest[far] = 0.0;
            }
        }
    }
    (centroids, assign, trace)
}

/// Best of `restarts` Lloyd runs seeded by k-means++. Weights are the
/// cluster proportions.
pub fn kmeans_baseline(
    data: &Dataset,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<BaselineFit<DiracMixture>> {
    check_request(data, k, restarts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<BaselineFit<DiracMixture>> = None;
    for _ in 0..restarts {
        let init = kmeans_plus_plus(data, k, &mut rng);
        let (centroids, assign, trace) = lloyd(data, init);
        let objective = *trace.last().expect("at least one iteration");
        if best.as_ref().is_some_and(|b| b.objective <= objective) {
            continue;
        }
        let mut weights = vec![0.0; k];
        for &j in &assign {
            weights[j] += 1.0;
        }
        weights.iter_mut().for_each(|w| *w /= data.len() as f64);
        best = Some(BaselineFit {
            model: DiracMixture::new(weights, centroids)?,
            objective,
            trace,
        });
    }
    Ok(best.expect("restarts >= 1"))
}

fn column_variances(data: &Dataset) -> Vec<f64> {
    let mean = data.mean();
    let n = data.len() as f64;
    (0..data.dim())
        .map(|l| data.rows().map(|x| (x[l] - mean[l]).powi(2)).sum::<f64>() / n)
        .collect()
}

fn em(data: &Dataset, mut model: GaussianMixture, floor: f64) -> (GaussianMixture, Vec<f64>) {
    let n = data.len();
    let k = model.k();
    let d = data.dim();
    let mut resp = vec![0.0; n * k];
    let mut buf = vec![0.0; k];
    let mut trace: Vec<f64> = Vec::new();
    for iter in 0..MAX_ITERS {
        let mut ll = 0.0;
        for (i, x) in data.rows().enumerate() {
            component_log_densities(&model, x, &mut buf);
            let norm = log_sum_exp(&buf);
            ll += norm;
            for j in 0..k {
                resp[i * k + j] = (buf[j] - norm).exp();
            }
        }
        let converged = trace
            .last()
            .is_some_and(|prev| (ll - prev).abs() <= RELATIVE_TOLERANCE * prev.abs());
        trace.push(ll);
        if converged || iter + 1 == MAX_ITERS {
            break;
        }

        for j in 0..k {
            let mass: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            model.weights[j] = mass / n as f64;
            // a component without responsibility keeps its parameters
            if mass <= 0.0 {
                continue;
            }
            let mut mean = vec![0.0; d];
            for (i, x) in data.rows().enumerate() {
                let r = resp[i * k + j];
                for (m, v) in mean.iter_mut().zip(x) {
                    *m += r * v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= mass);
            let mut var = vec![0.0; d];
            for (i, x) in data.rows().enumerate() {
                let r = resp[i * k + j];
                for l in 0..d {
                    var[l] += r * (x[l] - mean[l]).powi(2);
                }
            }
            model.variances[j] = var.iter().map(|v| (v / mass).max(floor)).collect();
            model.means[j] = mean;
        }
    }
    (model, trace)
}

/// Best of `restarts` EM runs with diagonal covariances, each started from
/// k-means++ means, the per-column data variance and uniform weights.
/// Variances never drop below `1e-8 ‖u − l‖∞²` of the data bounds.
pub fn em_baseline(
    data: &Dataset,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<BaselineFit<GaussianMixture>> {
    check_request(data, k, restarts)?;
    let (lo, hi) = data.bounds()?;
    let floor = BoxDomain::new(lo, hi)?.variance_floor();
    let init_var: Vec<f64> = column_variances(data).into_iter().map(|v| v.max(floor)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<BaselineFit<GaussianMixture>> = None;
    for _ in 0..restarts {
        let means = kmeans_plus_plus(data, k, &mut rng);
        let init = GaussianMixture::new(vec![1.0 / k as f64; k], means, vec![init_var.clone(); k])?;
        let (model, trace) = em(data, init, floor);
        let objective = *trace.last().expect("at least one iteration");
        if !objective.is_finite() {
            continue;
        }
        if best.as_ref().is_some_and(|b| b.objective >= objective) {
            continue;
        }
        best = Some(BaselineFit {
            model,
            objective,
            trace,
        });
    }
    best.ok_or_else(|| Error::Numerical("EM produced no finite log-likelihood".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::generate::PlantedMixture;
    use crate::eval::metrics::{log_likelihood, sse};

    #[test]
    fn one_centroid_per_point() {
        let data = Dataset::from_rows(&[[0.0, 1.0], [3.0, 2.0], [5.0, 5.0], [1.0, 7.0]]).unwrap();
        let fit = kmeans_baseline(&data, 4, 1, 0).unwrap();
        assert_eq!(fit.objective, 0.0);
        assert_eq!(sse(&fit.model, &data).unwrap(), 0.0);
    }

    #[test]
    fn lloyd_is_monotone_and_consistent() {
        let planted = PlantedMixture {
            k: 4,
            d: 3,
            ..PlantedMixture::default()
        }
        .generate(500, 4)
        .unwrap();
        let fit = kmeans_baseline(&planted.samples, 4, 5, 1).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!((sse(&fit.model, &planted.samples).unwrap() - fit.objective).abs() <= 1e-9 * fit.objective);
        assert!((fit.model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_planted_partition() {
        let mut exact = 0;
        for seed in 0..10 {
            let planted = PlantedMixture {
                k: 3,
                d: 2,
                separation: 10.0,
                component_std: 0.03,
                std_spread: 0.0,
            }
            .generate(300, seed)
            .unwrap();
            let fit = kmeans_baseline(&planted.samples, 3, 10, seed).unwrap();
            let assigned: Vec<usize> = planted
                .samples
                .rows()
                .map(|x| {
                    (0..3)
                        .min_by(|a, b| {
                            squared_distance(x, &fit.model.centroids[*a])
                                .total_cmp(&squared_distance(x, &fit.model.centroids[*b]))
                        })
                        .unwrap()
                })
                .collect();
            // same partition up to relabeling
            let consistent = (0..assigned.len()).all(|i| {
                (0..assigned.len()).all(|j| {
                    (assigned[i] == assigned[j]) == (planted.labels[i] == planted.labels[j])
                })
            });
            if consistent {
                exact += 1;
            }
        }
        assert!(exact >= 9, "exact partitions {exact}/10");
    }

    #[test]
    fn em_is_monotone() {
        let planted = PlantedMixture {
            k: 3,
            d: 2,
            ..PlantedMixture::default()
        }
        .generate(400, 7)
        .unwrap();
        let fit = em_baseline(&planted.samples, 3, 3, 2).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
        let ll = log_likelihood(&fit.model, &planted.samples).unwrap();
        assert!((ll - fit.objective).abs() <= 1e-6 * ll.abs());
        assert!(ll > 0.0);
    }

    #[test]
    fn invalid_requests() {
        let data = Dataset::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(kmeans_baseline(&data, 3, 1, 0).is_err());
        assert!(kmeans_baseline(&data, 1, 0, 0).is_err());
        assert!(em_baseline(&data, 0, 1, 0).is_err());
    }
}
