//! Random periodic feature maps `x -> (1/√m) f(Ωᵀx + ξ)`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::periodic::PeriodicFunction;

/// Distribution of the frequency vectors `ω_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyLaw {
    /// `ω ~ N(0, σ² I_d)`.
    Gaussian,
    /// Uniform direction with a half-normal radius `|g|`, `g ~ N(0, d σ²)`.
    /// Same mean squared norm as the Gaussian law, more mass near zero.
    FoldedGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencySampler {
    pub law: FrequencyLaw,
    /// Per-coordinate frequency variance (rad² per squared data unit).
    pub sigma2: f64,
    pub dim: usize,
}

/// Kernel-scale presets for the frequency variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePreset {
    KMeans,
    Gmm,
}

impl ScalePreset {
    /// Data-space kernel variance: `1/(10 d)` for k-means, `1/(100 d)` for GMM.
    pub fn kernel_variance(self, dim: usize) -> f64 {
        match self {
            ScalePreset::KMeans => 1.0 / (10.0 * dim as f64),
            ScalePreset::Gmm => 1.0 / (100.0 * dim as f64),
        }
    }

    /// Frequency variance `1 / kernel_variance`.
    pub fn frequency_variance(self, dim: usize) -> f64 {
        1.0 / self.kernel_variance(dim)
    }
}

/// `m` frequency vectors of dimension `d`, `ω_j` stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Frequencies {
    dim: usize,
    values: Vec<f64>,
}

impl Frequencies {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} frequency entries do not form columns of dimension {dim}",
                values.len()
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.values.len() / self.dim
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

impl FrequencySampler {
    pub fn new(law: FrequencyLaw, sigma2: f64, dim: usize) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(Self { law, sigma2, dim })
    }

    /// Draws `m` frequency vectors; deterministic given `seed`.
    pub fn sample(&self, m: usize, seed: u64) -> Result<Frequencies> {
        if m == 0 {
            return Err(Error::invalid("sketch size must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = self.sigma2.sqrt();
        let d = self.dim;
        let mut values = Vec::with_capacity(m * d);
        match self.law {
            FrequencyLaw::Gaussian => {
                for _ in 0..m * d {
                    let g: f64 = rng.sample(StandardNormal);
                    values.push(sigma * g);
                }
            }
            FrequencyLaw::FoldedGaussian => {
                let radius = Normal::new(0.0, sigma * (d as f64).sqrt())
                    .map_err(|e| Error::invalid(e.to_string()))?;
                let mut direction = vec![0.0; d];
                for _ in 0..m {
                    let norm = loop {
                        for u in direction.iter_mut() {
                            *u = rng.sample(StandardNormal);
                        }
                        let norm = direction.iter().map(|u| u * u).sum::<f64>().sqrt();
                        if norm > 0.0 {
                            break norm;
                        }
                    };
                    let r = radius.sample(&mut rng).abs();
                    values.extend(direction.iter().map(|u| r * u / norm));
                }
            }
        }
        Frequencies::new(d, values)
    }
}

/// Uniform dither on `[0, 2π)`; deterministic given `seed`.
pub fn sample_dither(m: usize, seed: u64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::invalid("sketch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m).map(|_| rng.random_range(0.0..TAU)).collect())
}

/// Serializable description of a seeded feature map. Ω and ξ are always
/// regenerated from the seeds and never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapConfig {
    pub d: usize,
    pub m: usize,
    pub law: FrequencyLaw,
    pub sigma2: f64,
    pub omega_seed: u64,
    /// `None` means zero dither.
    pub dither_seed: Option<u64>,
    pub nonlinearity: PeriodicFunction,
    #[serde(default)]
    pub renormalize: bool,
}

impl FeatureMapConfig {
    /// Same frequencies and dither with another nonlinearity.
    pub fn with_nonlinearity(&self, f: PeriodicFunction, renormalize: bool) -> Self {
        Self {
            nonlinearity: f,
            renormalize,
            ..self.clone()
        }
    }

    pub fn build(&self) -> Result<FeatureMap> {
        FeatureMap::from_config(self.clone())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config is always serializable");
        short_digest(&[b"config", json.as_slice()])
    }
}

fn short_digest(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    hex::encode(&digest[..16])
}

/// A materialized feature map `Ψ_f(x) = (1/√m) f(Ωᵀx + ξ)`, optionally
/// divided by the first Fourier coefficient `F_1` of `f`.
#[derive(Clone, Debug)]
pub struct FeatureMap {
    config: Option<FeatureMapConfig>,
    omega: Frequencies,
    dither: Vec<f64>,
    nonlinearity: PeriodicFunction,
    renormalize: bool,
    /// Applied to every output: `1/√m`, divided by `F_1` when renormalizing.
    output_scale: Complex64,
    hash: String,
}

impl FeatureMap {
    pub fn from_config(config: FeatureMapConfig) -> Result<Self> {
        let sampler = FrequencySampler::new(config.law, config.sigma2, config.d)?;
        let omega = sampler.sample(config.m, config.omega_seed)?;
        let dither = match config.dither_seed {
            Some(seed) => sample_dither(config.m, seed)?,
            None => vec![0.0; config.m],
        };
        let hash = config.hash();
        let mut map = Self::assemble(
            omega,
            dither,
            config.nonlinearity.clone(),
            config.renormalize,
        )?;
        map.hash = hash;
        map.config = Some(config);
        Ok(map)
    }

    /// A map from explicit frequencies and dither. Such maps cannot be
    /// written to disk since they have no seeds.
    pub fn from_parts(
        omega: Frequencies,
        dither: Vec<f64>,
        nonlinearity: PeriodicFunction,
        renormalize: bool,
    ) -> Result<Self> {
        if let Some(bad) = dither.iter().find(|v| !(0.0..TAU).contains(*v)) {
            return Err(Error::invalid(format!("dither entry {bad} is outside [0, 2π)")));
        }
        Self::assemble(omega, dither, nonlinearity, renormalize)
    }

    fn assemble(
        omega: Frequencies,
        dither: Vec<f64>,
        nonlinearity: PeriodicFunction,
        renormalize: bool,
    ) -> Result<Self> {
        let m = omega.count();
        if dither.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: dither.len(),
            });
        }
        let mut output_scale = Complex64::new(1.0 / (m as f64).sqrt(), 0.0);
        if renormalize {
            let f1 = nonlinearity.first_coefficient();
            if f1.norm() <= 1e-12 {
                return Err(Error::DegenerateFunction);
            }
            output_scale /= f1;
        }
        let omega_bytes: Vec<u8> = omega.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
        let dither_bytes: Vec<u8> = dither.iter().flat_map(|v| v.to_le_bytes()).collect();
        let f_json = serde_json::to_vec(&nonlinearity)?;
        let hash = short_digest(&[
            b"explicit",
            &omega_bytes,
            &dither_bytes,
            &f_json,
            &[renormalize as u8],
        ]);
        Ok(Self {
            config: None,
            omega,
            dither,
            nonlinearity,
            renormalize,
            output_scale,
            hash,
        })
    }

    pub fn config(&self) -> Option<&FeatureMapConfig> {
        self.config.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    pub fn sketch_size(&self) -> usize {
        self.dither.len()
    }

    pub fn frequencies(&self) -> &Frequencies {
        &self.omega
    }

    pub fn dither(&self) -> &[f64] {
        &self.dither
    }

    pub fn nonlinearity(&self) -> &PeriodicFunction {
        &self.nonlinearity
    }

    pub fn renormalize(&self) -> bool {
        self.renormalize
    }

    pub fn output_scale(&self) -> Complex64 {
        self.output_scale
    }

    /// Identifier of the map; equal for maps that produce equal outputs
    /// from equal seeds.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn is_rff(&self) -> bool {
        matches!(self.nonlinearity, PeriodicFunction::ComplexExponential)
    }

    /// Same Ω and ξ with another nonlinearity.
    pub fn with_nonlinearity(&self, f: PeriodicFunction, renormalize: bool) -> Result<Self> {
        match &self.config {
            Some(config) => FeatureMap::from_config(config.with_nonlinearity(f, renormalize)),
            None => Self::assemble(self.omega.clone(), self.dither.clone(), f, renormalize),
        }
    }

    /// The random Fourier feature map sharing this map's Ω and ξ.
    pub fn reference(&self) -> Result<Self> {
        self.with_nonlinearity(PeriodicFunction::ComplexExponential, false)
    }

    /// True when both maps use bitwise-identical frequencies and dither.
    pub fn shares_frequencies(&self, other: &FeatureMap) -> bool {
        self.omega == other.omega && self.dither == other.dither
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `ω_jᵀ x + ξ_j`.
    #[inline]
    pub fn phase(&self, j: usize, x: &[f64]) -> f64 {
        let w = self.omega.column(j);
        let mut t = self.dither[j];
        for (a, b) in w.iter().zip(x) {
            t += a * b;
        }
        t
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        self.check_dim(x)?;
        Ok((0..self.sketch_size())
            .map(|j| self.output_scale * self.nonlinearity.eval(self.phase(j, x)))
            .collect())
    }

    /// Adds `weight · Ψ(x)` to `acc` without checking dimensions.
    #[inline]
    pub(crate) fn accumulate(&self, x: &[f64], weight: f64, acc: &mut [Complex64]) {
        let scale = self.output_scale * weight;
        for (j, a) in acc.iter_mut().enumerate() {
            *a += scale * self.nonlinearity.eval(self.phase(j, x));
        }
    }

    /// Bits needed to transmit one sketch contribution: 2 per entry for a
    /// one-bit nonlinearity, two floats per entry otherwise.
    pub fn contribution_bits(&self, float_bits: u32) -> Result<u64> {
        if float_bits != 32 && float_bits != 64 {
            return Err(Error::invalid(format!(
                "float width must be 32 or 64 bits, got {float_bits}"
            )));
        }
        let m = self.sketch_size() as u64;
        Ok(if self.nonlinearity.is_one_bit() {
            2 * m
        } else {
            2 * u64::from(float_bits) * m
        })
    }
}
