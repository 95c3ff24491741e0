//! 2π-periodic complex nonlinearities used to build random periodic features.
//!
//! Every function here is centered (no DC term) and has period 2π. Besides
//! evaluation, each function exposes its Fourier-series coefficients, its
//! sup-norm and its mean Lipschitz constant, the quantities that control how
//! far a sketch built with the function can drift from a plain random
//! Fourier feature sketch.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest harmonic index accepted by [`PeriodicFunction::fourier_coefficient`].
pub const DEFAULT_MAX_HARMONIC: u32 = 64;

/// Samples per period used for numeric quadrature.
pub const QUADRATURE_SAMPLES: usize = 1 << 14;

/// Samples per period used by the mean Lipschitz estimator.
pub const LIPSCHITZ_SAMPLES: usize = 1 << 14;

/// Number of radii in the geometric grid of the mean Lipschitz estimator.
pub const LIPSCHITZ_RADII: usize = 64;

const LIPSCHITZ_MIN_RADIUS: f64 = 1e-4;

/// Minimum table length accepted for a tabulated function.
pub const MIN_TABLE_LEN: usize = 1 << 12;

/// Coefficients with modulus below this are treated as zero.
const ZERO_COEFFICIENT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodicKind {
    ComplexExponential,
    UniversalQuantizer,
    ComplexModulo,
    TabulatedCustom,
}

/// A centered, 2π-periodic map `f: R -> C`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodicFunction {
    /// `t -> exp(i t)`, the nonlinearity of random Fourier features.
    #[serde(alias = "rff", alias = "exp")]
    ComplexExponential,
    /// `t -> sign(cos t) + i sign(sin t)`, one-bit universal quantization.
    #[serde(alias = "quantized")]
    UniversalQuantizer,
    /// Pair of phase-shifted normalized sawtooth waves.
    #[serde(alias = "modulo")]
    ComplexModulo,
    /// Arbitrary function given by uniform samples over `[0, 2π)`.
    Tabulated(Tabulated),
}

/// Uniform samples `f(2π i / N)`, `i = 0..N`, linearly interpolated.
///
/// The mean of the samples is removed at construction so the function is
/// centered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabulatedRepr", into = "TabulatedRepr")]
pub struct Tabulated {
    values: Arc<[Complex64]>,
}

#[derive(Serialize, Deserialize)]
struct TabulatedRepr {
    values: Vec<[f64; 2]>,
}

impl TryFrom<TabulatedRepr> for Tabulated {
    type Error = Error;

    fn try_from(repr: TabulatedRepr) -> Result<Self> {
        Tabulated::new(
            repr.values
                .into_iter()
                .map(|[re, im]| Complex64::new(re, im))
                .collect(),
        )
    }
}

impl From<Tabulated> for TabulatedRepr {
    fn from(t: Tabulated) -> Self {
        TabulatedRepr {
            values: t.values.iter().map(|v| [v.re, v.im]).collect(),
        }
    }
}

impl Tabulated {
    pub fn new(mut values: Vec<Complex64>) -> Result<Self> {
        if values.len() < MIN_TABLE_LEN {
            return Err(Error::invalid(format!(
                "tabulated function needs at least {MIN_TABLE_LEN} samples, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("tabulated function has non-finite samples"));
        }
        let mean = values.iter().sum::<Complex64>() / values.len() as f64;
        for v in &mut values {
            *v -= mean;
        }
        Ok(Self {
            values: values.into(),
        })
    }

    /// Samples `f` at `n` uniform points of `[0, 2π)`.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let h = TAU / n as f64;
        Self::new((0..n).map(|i| f(i as f64 * h)).collect())
    }

    /// Reads a CSV of `t,re,im` rows (or `t,re` for real-valued functions)
    /// with uniformly spaced `t` covering `[0, 2π)`. A non-numeric first row
    /// is skipped as a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut ts = Vec::new();
        let mut values = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(str::parse::<f64>).collect();
            let fields = match parsed {
                Ok(fields) => fields,
                Err(_) if line == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("line {}: {e}", line + 1))),
            };
            let (t, v) = match fields.as_slice() {
                [t, re] => (*t, Complex64::new(*re, 0.0)),
                [t, re, im] => (*t, Complex64::new(*re, *im)),
                _ => {
                    return Err(Error::Parse(format!(
                        "line {}: expected 2 or 3 columns, found {}",
                        line + 1,
                        fields.len()
                    )))
                }
            };
            ts.push(t);
            values.push(v);
        }
        let n = ts.len();
        if n < MIN_TABLE_LEN {
            return Err(Error::Parse(format!(
                "need at least {MIN_TABLE_LEN} samples, found {n}"
            )));
        }
        let h = TAU / n as f64;
        for (i, t) in ts.iter().enumerate() {
            if (t - i as f64 * h).abs() > 1e-6 * h.max(1.0) {
                return Err(Error::Parse(format!(
                    "sample {i} at t={t} is not on the uniform grid over [0, 2π)"
                )));
            }
        }
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    fn eval(&self, t: f64) -> Complex64 {
        let n = self.values.len();
        let pos = t.rem_euclid(TAU) / TAU * n as f64;
        let i = (pos.floor() as usize).min(n - 1);
        let frac = pos - i as f64;
        let a = self.values[i];
        let b = self.values[(i + 1) % n];
        a + (b - a) * frac
    }
}

/// `sign` with `sign(0) = +1`.
#[inline]
fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Normalized modulo: `2 (t/T - floor(t/T)) - 1`, with values in `[-1, 1)`.
#[inline]
pub fn normalized_modulo(t: f64, period: f64) -> f64 {
    let s = t / period;
    2.0 * (s - s.floor()) - 1.0
}

impl PeriodicFunction {
    pub fn kind(&self) -> PeriodicKind {
        match self {
            PeriodicFunction::ComplexExponential => PeriodicKind::ComplexExponential,
            PeriodicFunction::UniversalQuantizer => PeriodicKind::UniversalQuantizer,
            PeriodicFunction::ComplexModulo => PeriodicKind::ComplexModulo,
            PeriodicFunction::Tabulated(_) => PeriodicKind::TabulatedCustom,
        }
    }

    /// Short name used in tables and file names.
    pub fn label(&self) -> &'static str {
        match self {
            PeriodicFunction::ComplexExponential => "rff",
            PeriodicFunction::UniversalQuantizer => "quantized",
            PeriodicFunction::ComplexModulo => "modulo",
            PeriodicFunction::Tabulated(_) => "tabulated",
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> Complex64 {
        match self {
            PeriodicFunction::ComplexExponential => {
                let (s, c) = t.sin_cos();
                Complex64::new(c, s)
            }
            PeriodicFunction::UniversalQuantizer => {
                let (s, c) = t.sin_cos();
                Complex64::new(sign(c), sign(s))
            }
            PeriodicFunction::ComplexModulo => Complex64::new(
                normalized_modulo(t, TAU),
                normalized_modulo(t - PI / 2.0, TAU),
            ),
            PeriodicFunction::Tabulated(table) => table.eval(t),
        }
    }

    /// Fourier coefficient `F_k = (1/2π) ∫ f(t) e^{-ikt} dt` for
    /// `|k| <= DEFAULT_MAX_HARMONIC`.
    pub fn fourier_coefficient(&self, k: i64) -> Result<Complex64> {
        self.fourier_coefficient_bounded(k, DEFAULT_MAX_HARMONIC)
    }

    pub fn fourier_coefficient_bounded(&self, k: i64, max_harmonic: u32) -> Result<Complex64> {
        if k.unsigned_abs() > u64::from(max_harmonic) {
            return Err(Error::HarmonicOutOfRange {
                k,
                max: max_harmonic,
            });
        }
        let coeff = match self {
            PeriodicFunction::ComplexExponential => {
                if k == 1 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            // Only harmonics k ≡ 1 (mod 4) survive: the cosine and sine
            // square waves cancel on the others.
            PeriodicFunction::UniversalQuantizer => {
                if k.rem_euclid(4) == 1 {
                    Complex64::new(4.0 / (PI * k as f64), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            // Sawtooth coefficient i/(πk), plus the same shifted by -π/2 and
            // multiplied by i.
            PeriodicFunction::ComplexModulo => {
                if k == 0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    let rot = match k.rem_euclid(4) {
                        0 => Complex64::new(1.0, 0.0),
                        1 => Complex64::new(0.0, -1.0),
                        2 => Complex64::new(-1.0, 0.0),
                        _ => Complex64::new(0.0, 1.0),
                    };
                    let i = Complex64::i();
                    i * (Complex64::new(1.0, 0.0) + i * rot) / (PI * k as f64)
                }
            }
            PeriodicFunction::Tabulated(table) => {
                if table.len() >= QUADRATURE_SAMPLES {
                    let n = table.len();
                    let h = TAU / n as f64;
                    table
                        .values()
                        .iter()
                        .enumerate()
                        .map(|(j, v)| v * Complex64::from_polar(1.0, -(k as f64) * j as f64 * h))
                        .sum::<Complex64>()
                        / n as f64
                } else {
                    self.fourier_coefficient_quadrature(k, QUADRATURE_SAMPLES, 0.0)
                }
            }
        };
        Ok(coeff)
    }

    /// Equal-weight quadrature of the Fourier integral on `samples` points
    /// `t_j = (j + offset) 2π / samples`. For periodic integrands this is the
    /// trapezoidal rule; `offset = 0.5` gives the midpoint rule, which keeps
    /// the jumps of the built-in discontinuous functions off the nodes.
    pub fn fourier_coefficient_quadrature(&self, k: i64, samples: usize, offset: f64) -> Complex64 {
        let h = TAU / samples as f64;
        (0..samples)
            .map(|j| {
                let t = (j as f64 + offset) * h;
                self.eval(t) * Complex64::from_polar(1.0, -(k as f64) * t)
            })
            .sum::<Complex64>()
            / samples as f64
    }

    /// First Fourier coefficient `F_1`.
    pub fn first_coefficient(&self) -> Complex64 {
        self.fourier_coefficient(1)
            .expect("harmonic 1 is always within range")
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            PeriodicFunction::ComplexExponential => 1.0,
            PeriodicFunction::UniversalQuantizer => SQRT_2,
            PeriodicFunction::ComplexModulo => 1.25f64.sqrt(),
            PeriodicFunction::Tabulated(table) => table
                .values()
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max),
        }
    }

    /// Closed-form mean Lipschitz constant, when known.
    pub fn mean_lipschitz_closed_form(&self) -> Option<f64> {
        match self {
            PeriodicFunction::ComplexExponential => Some(1.0),
            PeriodicFunction::UniversalQuantizer => Some(8.0 / PI),
            PeriodicFunction::ComplexModulo => Some((4.0 + SQRT_2) / PI),
            PeriodicFunction::Tabulated(_) => None,
        }
    }

    /// Numeric mean Lipschitz constant: the largest ratio
    /// `I_δ / (2π δ)` over the estimator's radius grid, where
    /// `I_δ = ∫ sup_{|r| <= δ} |f(t + r) - f(t)| dt`.
    pub fn mean_lipschitz(&self) -> f64 {
        // I_δ ≤ 4π‖f‖∞, so radii with 2‖f‖∞/δ below the running max cannot win
        let sup = self.sup_norm();
        self.lipschitz_ratios(|delta, best| 2.0 * sup / delta < best)
            .into_iter()
            .map(|(_, ratio)| ratio)
            .fold(0.0, f64::max)
    }

    /// `(δ, I_δ / (2π δ))` for every radius of the estimator grid.
    ///
    /// `f` is tabulated at `LIPSCHITZ_SAMPLES` cell midpoints; each radius is
    /// snapped to a whole number `w >= 1` of cells and the reported `δ` is the
    /// snapped value `w h`. The windowed sup is grown one cell at a time, so
    /// the whole grid costs `O(N²/2)` distance evaluations.
    pub fn mean_lipschitz_profile(&self) -> Vec<(f64, f64)> {
        self.lipschitz_ratios(|_, _| false)
    }

    /// Profile over the radius grid, cut short once `stop(δ, best ratio)`
    /// holds for the next radius.
    fn lipschitz_ratios(&self, stop: impl Fn(f64, f64) -> bool) -> Vec<(f64, f64)> {
        let n = LIPSCHITZ_SAMPLES;
        let h = TAU / n as f64;
        let samples: Vec<Complex64> = (0..n).map(|i| self.eval((i as f64 + 0.5) * h)).collect();

        let ratio = (PI / LIPSCHITZ_MIN_RADIUS).powf(1.0 / (LIPSCHITZ_RADII - 1) as f64);
        let mut widths: Vec<usize> = (0..LIPSCHITZ_RADII)
            .map(|g| {
                let delta = LIPSCHITZ_MIN_RADIUS * ratio.powi(g as i32);
                ((delta / h).round() as usize).clamp(1, n / 2)
            })
            .collect();
        widths.dedup();

        let mut window_sup = vec![0.0f64; n];
        let mut shifted = vec![0.0f64; n];
        let mut profile = Vec::with_capacity(widths.len());
        let mut next = 0;
        let mut best = 0.0f64;
        for w in 1..=*widths.last().expect("grid is non-empty") {
            if w == widths[next] && stop(w as f64 * h, best) {
                break;
            }
            for i in 0..n {
                shifted[i] = (samples[(i + w) % n] - samples[i]).norm();
            }
            for i in 0..n {
                let back = shifted[(i + n - w) % n];
                window_sup[i] = window_sup[i].max(shifted[i]).max(back);
            }
            if widths[next] == w {
                let integral = window_sup.iter().sum::<f64>() * h;
                let delta = w as f64 * h;
                let ratio = integral / (TAU * delta);
                best = best.max(ratio);
                profile.push((delta, ratio));
                next += 1;
            }
        }
        profile
    }

    /// Mean Lipschitz constant used in bounds: the closed form when known,
    /// the numeric estimate otherwise.
    pub fn lipschitz_constant(&self) -> f64 {
        self.mean_lipschitz_closed_form()
            .unwrap_or_else(|| self.mean_lipschitz())
    }

    fn first_coefficient_modulus(&self) -> Result<f64> {
        let f1 = self.first_coefficient().norm();
        if f1 <= ZERO_COEFFICIENT {
            Err(Error::DegenerateFunction)
        } else {
            Ok(f1)
        }
    }

    /// `C_f = 1 + ‖f‖∞ / |F_1|`, the scale of the renormalized distortion.
    pub fn distortion_constant(&self) -> Result<f64> {
        Ok(1.0 + self.sup_norm() / self.first_coefficient_modulus()?)
    }

    /// `c_f = 4 C_Λ (4 + L / |F_1|)` with the numeric mean Lipschitz
    /// constant `L`.
    pub fn covering_constant(&self, smoothness: f64) -> Result<f64> {
        self.covering_constant_with(smoothness, self.mean_lipschitz())
    }

    /// `c_f` with an externally supplied mean Lipschitz constant.
    pub fn covering_constant_with(&self, smoothness: f64, lipschitz: f64) -> Result<f64> {
        if !(smoothness > 0.0) {
            return Err(Error::invalid("smoothness constant must be positive"));
        }
        let f1 = self.first_coefficient_modulus()?;
        Ok(4.0 * smoothness * (4.0 + lipschitz / f1))
    }

    /// True when `f` takes finitely many values so that each output can be
    /// encoded with one bit per real component.
    pub fn is_one_bit(&self) -> bool {
        matches!(self, PeriodicFunction::UniversalQuantizer)
    }
}
