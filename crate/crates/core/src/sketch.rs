//! Empirical sketches `z = (1/n) Σ Ψ(x_i)` and their aggregation.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureMapConfig};

/// Rows summed sequentially before switching to pairwise combination.
const LEAF_ROWS: usize = 256;
/// Subtrees larger than this are summed on the rayon pool.
const PARALLEL_ROWS: usize = 4096;

/// Averaged feature vector of `count` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Sketch {
    values: Vec<Complex64>,
    count: u64,
    map_hash: String,
    map: Option<FeatureMapConfig>,
}

#[derive(Serialize, Deserialize)]
struct SketchFile {
    m: usize,
    count: u64,
    map: FeatureMapConfig,
    values: Vec<[f64; 2]>,
}

impl Sketch {
    /// The sketch of zero samples.
    pub fn empty(map: &FeatureMap) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); map.sketch_size()],
            count: 0,
            map_hash: map.hash().to_owned(),
            map: map.config().cloned(),
        }
    }

    /// A sketch with given values, e.g. the analytic sketch of a model.
    pub fn from_values(map: &FeatureMap, values: Vec<Complex64>, count: u64) -> Result<Self> {
        if values.len() != map.sketch_size() {
            return Err(Error::DimensionMismatch {
                expected: map.sketch_size(),
                found: values.len(),
            });
        }
        if count == 0 && values.iter().any(|v| *v != Complex64::new(0.0, 0.0)) {
            return Err(Error::invalid("a sketch of zero samples must be zero"));
        }
        Ok(Self {
            values,
            count,
            map_hash: map.hash().to_owned(),
            map: map.config().cloned(),
        })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn map_hash(&self) -> &str {
        &self.map_hash
    }

    pub fn map_config(&self) -> Option<&FeatureMapConfig> {
        self.map.as_ref()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Divides the values by `F_1`, turning a sketch of `Ψ_f` into a sketch
    /// of the renormalized map `Ψ_f / F_1`.
    pub fn renormalized(&self, map: &FeatureMap) -> Result<Sketch> {
        if map.hash() != self.map_hash {
            return Err(Error::IncompatibleSketch(
                "sketch was not produced by this feature map".into(),
            ));
        }
        if map.renormalize() {
            return Ok(self.clone());
        }
        let target = map.with_nonlinearity(map.nonlinearity().clone(), true)?;
        let f1 = map.nonlinearity().first_coefficient();
        Ok(Sketch {
            values: self.values.iter().map(|v| v / f1).collect(),
            count: self.count,
            map_hash: target.hash().to_owned(),
            map: target.config().cloned(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let map = self.map.clone().ok_or_else(|| {
            Error::invalid("sketches of maps without seeds cannot be serialized")
        })?;
        let file = SketchFile {
            m: self.values.len(),
            count: self.count,
            map,
            values: self.values.iter().map(|v| [v.re, v.im]).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SketchFile = serde_json::from_str(text)?;
        if file.values.len() != file.m || file.map.m != file.m {
            return Err(Error::DimensionMismatch {
                expected: file.m,
                found: file.values.len(),
            });
        }
        let values: Vec<Complex64> = file
            .values
            .into_iter()
            .map(|[re, im]| Complex64::new(re, im))
            .collect();
        if file.count == 0 && values.iter().any(|v| v.norm() != 0.0) {
            return Err(Error::Parse("sketch of zero samples has nonzero values".into()));
        }
        Ok(Self {
            values,
            count: file.count,
            map_hash: file.map.hash(),
            map: Some(file.map),
        })
    }
}

fn sum_rows(map: &FeatureMap, data: &Dataset, rows: &[usize]) -> Vec<Complex64> {
    if rows.len() <= LEAF_ROWS {
        let mut acc = vec![Complex64::new(0.0, 0.0); map.sketch_size()];
        for &i in rows {
            map.accumulate(data.row(i), 1.0, &mut acc);
        }
        return acc;
    }
    let (left, right) = rows.split_at(rows.len() / 2);
    let (mut a, b) = if rows.len() > PARALLEL_ROWS {
        rayon::join(|| sum_rows(map, data, left), || sum_rows(map, data, right))
    } else {
        (sum_rows(map, data, left), sum_rows(map, data, right))
    };
    for (x, y) in a.iter_mut().zip(&b) {
        *x += y;
    }
    a
}

fn check_data(map: &FeatureMap, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            found: data.dim(),
        });
    }
    Ok(())
}

/// Sketch of the rows of `data` selected by `rows`.
///
/// Partial sums follow a fixed pairwise tree, so the result does not depend
/// on the number of threads.
pub fn sketch_rows(map: &FeatureMap, data: &Dataset, rows: &[usize]) -> Result<Sketch> {
    check_data(map, data)?;
    if let Some(&bad) = rows.iter().find(|&&i| i >= data.len()) {
        return Err(Error::invalid(format!("row {bad} is out of range")));
    }
    if rows.is_empty() {
        return Ok(Sketch::empty(map));
    }
    let n = rows.len() as f64;
    let values = sum_rows(map, data, rows).into_iter().map(|v| v / n).collect();
    Ok(Sketch {
        values,
        count: rows.len() as u64,
        map_hash: map.hash().to_owned(),
        map: map.config().cloned(),
    })
}

/// `z = (1/n) Σ Ψ(x_i)` over all rows of `data`.
pub fn sketch_dataset(map: &FeatureMap, data: &Dataset) -> Result<Sketch> {
    check_data(map, data)?;
    let rows: Vec<usize> = (0..data.len()).collect();
    sketch_rows(map, data, &rows)
}

/// Count-weighted average of two sketches of the same map.
pub fn merge(a: &Sketch, b: &Sketch) -> Result<Sketch> {
    if a.map_hash != b.map_hash {
        return Err(Error::IncompatibleSketch(format!(
            "map {} differs from map {}",
            a.map_hash, b.map_hash
        )));
    }
    if a.values.len() != b.values.len() {
        return Err(Error::IncompatibleSketch(format!(
            "sketch sizes {} and {} differ",
            a.values.len(),
            b.values.len()
        )));
    }
    if b.count == 0 {
        return Ok(a.clone());
    }
    if a.count == 0 {
        return Ok(b.clone());
    }
    let total = a.count + b.count;
    let (wa, wb) = (a.count as f64, b.count as f64);
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x * wa + y * wb) / total as f64)
        .collect();
    Ok(Sketch {
        values,
        count: total,
        map_hash: a.map_hash.clone(),
        map: a.map.clone(),
    })
}

/// Outcome of a simulated sensor-network aggregation.
#[derive(Clone, Debug)]
pub struct NodeAggregation {
    pub sketch: Sketch,
    /// Bits sent by all samples: `n · contribution_bits`.
    pub total_bits: u64,
    /// Samples handled by each node.
    pub node_counts: Vec<u64>,
}

/// Splits rows round-robin over `nodes`, sketches each share locally and
/// merges the partial sketches.
pub fn simulate_nodes(
    map: &FeatureMap,
    data: &Dataset,
    nodes: usize,
    float_bits: u32,
) -> Result<NodeAggregation> {
    if nodes == 0 {
        return Err(Error::invalid("at least one node is required"));
    }
    check_data(map, data)?;
    let per_sample = map.contribution_bits(float_bits)?;
    let mut sketch = Sketch::empty(map);
    let mut node_counts = Vec::with_capacity(nodes);
    for node in 0..nodes {
        let rows: Vec<usize> = (node..data.len()).step_by(nodes).collect();
        node_counts.push(rows.len() as u64);
        let partial = sketch_rows(map, data, &rows)?;
        sketch = merge(&sketch, &partial)?;
    }
    Ok(NodeAggregation {
        sketch,
        total_bits: data.len() as u64 * per_sample,
        node_counts,
    })
}

/// Relative Euclidean distance `‖a − b‖ / max(‖a‖, ‖b‖)` between sketch values.
pub fn relative_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let scale = |v: &[Complex64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let denom = scale(a).max(scale(b));
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FrequencyLaw;
    use crate::periodic::PeriodicFunction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    fn map(f: PeriodicFunction, d: usize, m: usize) -> FeatureMap {
        FeatureMapConfig {
            d,
            m,
            law: FrequencyLaw::Gaussian,
            sigma2: 1.0,
            omega_seed: 21,
            dither_seed: Some(22),
            nonlinearity: f,
            renormalize: false,
        }
        .build()
        .unwrap()
    }

    fn uniform_data(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        Dataset::new(d, (0..n * d).map(|_| u.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn single_row_sketch_is_feature_vector() {
        let phi = map(PeriodicFunction::ComplexExponential, 2, 12);
        let data = Dataset::from_rows(&[[0.3, -0.2]]).unwrap();
        let z = sketch_dataset(&phi, &data).unwrap();
        assert_eq!(z.count(), 1);
        assert_eq!(z.values(), phi.apply(&[0.3, -0.2]).unwrap().as_slice());
    }

    #[test]
    fn duplicated_rows_keep_values() {
        let phi = map(PeriodicFunction::UniversalQuantizer, 3, 20);
        let data = uniform_data(300, 3, 1);
        let a = sketch_dataset(&phi, &data).unwrap();
        let b = sketch_dataset(&phi, &data.repeat_rows(2)).unwrap();
        assert_eq!(b.count(), 2 * a.count());
        assert!(relative_distance(a.values(), b.values()) < 1e-13);
    }

    #[test]
    fn gaussian_data_matches_characteristic_function() {
        let (d, m, n) = (2, 16, 1000);
        let phi = map(PeriodicFunction::ComplexExponential, d, m);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z = sketch_dataset(&phi, &Dataset::new(d, values).unwrap()).unwrap();
        for j in 0..m {
            let w = phi.frequencies().column(j);
            let norm2: f64 = w.iter().map(|v| v * v).sum();
            let expected = Complex64::from_polar((-norm2 / 2.0).exp(), phi.dither()[j])
                / (m as f64).sqrt();
            assert!((z.values()[j] - expected).norm() <= 5.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let phi = map(PeriodicFunction::ComplexExponential, 2, 4);
        let wrong = Dataset::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            sketch_dataset(&phi, &wrong),
            Err(Error::DimensionMismatch { .. })
        ));
        let empty = Dataset::new(2, vec![]).unwrap();
        assert!(matches!(sketch_dataset(&phi, &empty), Err(Error::EmptyDataset)));
    }

    #[test]
    fn merge_rules() {
        let phi = map(PeriodicFunction::ComplexExponential, 2, 8);
        let x1 = uniform_data(50, 2, 2);
        let x2 = uniform_data(70, 2, 3);
        let s1 = sketch_dataset(&phi, &x1).unwrap();
        let s2 = sketch_dataset(&phi, &x2).unwrap();
        assert_eq!(merge(&s1, &Sketch::empty(&phi)).unwrap(), s1);
        let twice = merge(&s1, &s1).unwrap();
        assert_eq!(twice.count(), 100);
        assert!(relative_distance(twice.values(), s1.values()) < 1e-15);

        let mut all = x1.as_slice().to_vec();
        all.extend_from_slice(x2.as_slice());
        let joint = sketch_dataset(&phi, &Dataset::new(2, all).unwrap()).unwrap();
        let merged = merge(&s1, &s2).unwrap();
        assert_eq!(merged.count(), 120);
        assert!(relative_distance(merged.values(), joint.values()) < 1e-12);

        let other = map(PeriodicFunction::UniversalQuantizer, 2, 8);
        let s3 = sketch_dataset(&other, &x1).unwrap();
        assert!(matches!(merge(&s1, &s3), Err(Error::IncompatibleSketch(_))));
    }

    #[test]
    fn node_simulation() {
        let q = map(PeriodicFunction::UniversalQuantizer, 3, 50);
        let data = uniform_data(100, 3, 9);
        let direct = sketch_dataset(&q, &data).unwrap();
        let one = simulate_nodes(&q, &data, 1, 64).unwrap();
        assert_eq!(one.sketch, direct);
        let seven = simulate_nodes(&q, &data, 7, 64).unwrap();
        assert_eq!(seven.total_bits, 10_000);
        assert_eq!(seven.node_counts.iter().sum::<u64>(), 100);
        assert!(relative_distance(seven.sketch.values(), direct.values()) < 1e-12);
        // more nodes than samples leaves some nodes idle
        let many = simulate_nodes(&q, &data, 150, 32).unwrap();
        assert_eq!(many.sketch.count(), 100);
        assert!(relative_distance(many.sketch.values(), direct.values()) < 1e-12);
        assert!(simulate_nodes(&q, &data, 0, 64).is_err());
    }

    #[test]
    fn rff_sketch_norm_at_most_one() {
        let phi = map(PeriodicFunction::ComplexExponential, 3, 64);
        let z = sketch_dataset(&phi, &uniform_data(500, 3, 4)).unwrap();
        assert!(z.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn renormalized_quantized_norm_bound() {
        let q = map(PeriodicFunction::UniversalQuantizer, 3, 64);
        let z = sketch_dataset(&q, &uniform_data(500, 3, 4)).unwrap();
        let zbar = z.renormalized(&q).unwrap();
        let bound = std::f64::consts::PI / (2.0 * std::f64::consts::SQRT_2);
        assert!(zbar.norm() <= bound + 1e-12);
        // renormalization commutes with sketching
        let qbar = q.with_nonlinearity(PeriodicFunction::UniversalQuantizer, true).unwrap();
        let direct = sketch_dataset(&qbar, &uniform_data(500, 3, 4)).unwrap();
        assert_eq!(direct.map_hash(), zbar.map_hash());
        assert!(relative_distance(direct.values(), zbar.values()) < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let q = map(PeriodicFunction::ComplexModulo, 2, 6);
        let z = sketch_dataset(&q, &uniform_data(10, 2, 1)).unwrap();
        let back = Sketch::from_json(&z.to_json().unwrap()).unwrap();
        assert_eq!(back, z);
        assert!(Sketch::from_json(r#"{"m": 2}"#).is_err());
    }
}
