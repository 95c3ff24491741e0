//! Sketch matching in box-normalized coordinates.
//!
//! Locations are stored as `(x − l) / s` with `s_l = u_l − l_l` (1 on flat
//! sides) and variances as `γ / s²`, so every parameter lives on a unit
//! scale. Frequencies and dither are rewritten accordingly.

use num_complex::Complex64;
use rand::Rng;

use super::descent::{project_simplex, projected_descent, DescentSettings};
use crate::error::Result;
use crate::features::FeatureMap;
use crate::models::{DiracMixture, GaussianMixture, Mixture, TaskKind};

use super::TaskSpec;

const NNLS_ITERS: usize = 200;
const NNLS_RTOL: f64 = 1e-10;
/// Random candidates scored per atom-search restart; the best ones seed
/// the descents.
const SCREENED_PER_RESTART: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum Constraint {
    Nonnegative,
    Simplex,
}

pub(super) struct Problem<'a> {
    z: &'a [Complex64],
    kind: TaskKind,
    dim: usize,
    m: usize,
    /// `1/√m`.
    scale: f64,
    /// Rescaled frequencies, `m × d` row-major.
    omega: Vec<f64>,
    /// Dither shifted by `ωᵀl`.
    phase0: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    side: Vec<f64>,
    /// Upper bound of each normalized coordinate (0 on flat sides).
    loc_max: Vec<f64>,
    var_min: Vec<f64>,
    var_max: Vec<f64>,
    var_init: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub(super) fn new(map: &FeatureMap, z: &'a [Complex64], task: &TaskSpec) -> Self {
        let dim = map.dim();
        let m = map.sketch_size();
        let lower = task.domain.lower().to_vec();
        let widths = task.domain.widths();
        let side: Vec<f64> = widths.iter().map(|&w| if w > 0.0 { w } else { 1.0 }).collect();
        let loc_max = widths.iter().map(|&w| if w > 0.0 { 1.0 } else { 0.0 }).collect();

        let freqs = map.frequencies();
        let mut omega = Vec::with_capacity(m * dim);
        let mut phase0 = Vec::with_capacity(m);
        for j in 0..m {
            let col = freqs.column(j);
            omega.extend(col.iter().zip(&side).map(|(o, s)| o * s));
            phase0.push(map.dither()[j] + col.iter().zip(&lower).map(|(o, l)| o * l).sum::<f64>());
        }

        let floor = task.domain.variance_floor();
        let cap = task.variance_cap();
        let width = task.domain.width();
        let init = if width > 0.0 { (width / 8.0).powi(2) } else { floor };
        let var_min: Vec<f64> = side.iter().map(|s| floor / (s * s)).collect();
        let var_max: Vec<f64> = side.iter().map(|s| cap / (s * s)).collect();
        let var_init = side
            .iter()
            .zip(var_min.iter().zip(&var_max))
            .map(|(s, (lo, hi))| (init / (s * s)).clamp(*lo, *hi))
            .collect();

        Self {
            z,
            kind: task.kind,
            dim,
            m,
            scale: map.output_scale().re,
            omega,
            phase0,
            lower,
            upper: task.domain.upper().to_vec(),
            side,
            loc_max,
            var_min,
            var_max,
            var_init,
        }
    }

    fn params_per_atom(&self) -> usize {
        match self.kind {
            TaskKind::KMeans => self.dim,
            TaskKind::Gmm => 2 * self.dim,
        }
    }

    #[inline]
    fn freq(&self, j: usize) -> &[f64] {
        &self.omega[j * self.dim..(j + 1) * self.dim]
    }

    fn project_atom(&self, p: &mut [f64]) {
        let d = self.dim;
        for l in 0..d {
            p[l] = p[l].clamp(0.0, self.loc_max[l]);
        }
        if self.kind == TaskKind::Gmm {
            for l in 0..d {
                p[d + l] = p[d + l].clamp(self.var_min[l], self.var_max[l]);
            }
        }
    }

    fn random_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p: Vec<f64> = self.loc_max.iter().map(|hi| hi * rng.random::<f64>()).collect();
        if self.kind == TaskKind::Gmm {
            p.extend_from_slice(&self.var_init);
        }
        p
    }

    /// Sketch of one unit-weight atom.
    fn atom_sketch(&self, p: &[f64], out: &mut [Complex64]) {
        let d = self.dim;
        for (j, o) in out.iter_mut().enumerate() {
            let w = self.freq(j);
            let mut phase = self.phase0[j];
            for l in 0..d {
                phase += w[l] * p[l];
            }
            let mut amp = self.scale;
            if self.kind == TaskKind::Gmm {
                let mut s = 0.0;
                for l in 0..d {
                    s += w[l] * w[l] * p[d + l];
                }
                amp *= (-0.5 * s).exp();
            }
            *o = Complex64::from_polar(amp, phase);
        }
    }

    fn sketches(&self, atoms: &[Vec<f64>]) -> Vec<Vec<Complex64>> {
        atoms
            .iter()
            .map(|p| {
                let mut a = vec![Complex64::new(0.0, 0.0); self.m];
                self.atom_sketch(p, &mut a);
                a
            })
            .collect()
    }

    pub(super) fn residual(&self, weights: &[f64], atoms: &[Vec<f64>]) -> Vec<Complex64> {
        let mut r = self.z.to_vec();
        let mut a = vec![Complex64::new(0.0, 0.0); self.m];
        for (w, p) in weights.iter().zip(atoms) {
            self.atom_sketch(p, &mut a);
            for (ri, ai) in r.iter_mut().zip(&a) {
                *ri -= *w * ai;
            }
        }
        r
    }

    pub(super) fn random_model_cost<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> f64 {
        let atoms: Vec<Vec<f64>> = (0..k).map(|_| self.random_atom(rng)).collect();
        let weights = vec![1.0 / k as f64; k];
        norm(&self.residual(&weights, &atoms))
    }

    /// `−Re⟨a(p), r⟩ / ‖a(p)‖` and its gradient.
    fn correlation(&self, p: &[f64], r: &[Complex64], grad: &mut [f64]) -> f64 {
        let d = self.dim;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut corr = 0.0;
        let mut norm2 = 0.0;
        let gmm = self.kind == TaskKind::Gmm;
        // gradient of the correlation and, for variances, of ‖a‖²
        let mut dnorm2 = vec![0.0; if gmm { d } else { 0 }];
        let mut a = vec![Complex64::new(0.0, 0.0); self.m];
        self.atom_sketch(p, &mut a);
        for j in 0..self.m {
            let w = self.freq(j);
            let c = a[j].conj() * r[j];
            corr += c.re;
            for l in 0..d {
                grad[l] += w[l] * c.im;
            }
            if gmm {
                let mag = a[j].norm_sqr();
                norm2 += mag;
                for l in 0..d {
                    let w2 = w[l] * w[l];
                    grad[d + l] -= 0.5 * w2 * c.re;
                    dnorm2[l] -= w2 * mag;
                }
            }
        }
        if !gmm {
            norm2 = self.scale * self.scale * self.m as f64;
        }
        let n = norm2.sqrt();
        // f = −corr / n
        for g in grad.iter_mut().take(d) {
            *g = -*g / n;
        }
        if gmm {
            for l in 0..d {
                let dn = dnorm2[l] / (2.0 * n);
                grad[d + l] = -(grad[d + l] * n - corr * dn) / (n * n);
            }
        }
        -corr / n
    }

    /// Atom maximizing the normalized correlation with `r`, best of
    /// `restarts` projected descents started from the best-correlated of
    /// `20 · restarts` random points of the box.
    pub(super) fn search_atom<R: Rng + ?Sized>(
        &self,
        r: &[Complex64],
        restarts: usize,
        rng: &mut R,
        settings: &DescentSettings,
    ) -> Vec<f64> {
        let mut scratch = vec![0.0; self.params_per_atom()];
        let mut candidates: Vec<(f64, Vec<f64>)> = (0..restarts * SCREENED_PER_RESTART)
            .map(|_| {
                let p = self.random_atom(rng);
                (self.correlation(&p, r, &mut scratch), p)
            })
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        candidates.truncate(restarts);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for (_, mut p) in candidates {
            let out = projected_descent(
                &mut p,
                |x, g| self.correlation(x, r, g),
                |x| self.project_atom(x),
                settings,
            );
            if best.as_ref().is_none_or(|(v, _)| out.value < *v) {
                best = Some((out.value, p));
            }
        }
        best.expect("restarts >= 1").1
    }

    /// Projected-gradient NNLS `min_{β ≥ 0} ½‖z − Σ β_k b_k‖²`.
    fn nnls_on(&self, columns: &[Vec<Complex64>]) -> Vec<f64> {
        let k = columns.len();
        let dot = |a: &[Complex64], b: &[Complex64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
        };
        let mut gram = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let v = dot(&columns[i], &columns[j]);
                gram[i * k + j] = v;
                gram[j * k + i] = v;
            }
        }
        let rhs: Vec<f64> = columns.iter().map(|c| dot(c, self.z)).collect();
        let lipschitz = (0..k)
            .map(|i| gram[i * k..(i + 1) * k].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut beta = vec![0.0; k];
        if lipschitz <= 0.0 {
            return beta;
        }
        let step = 1.0 / lipschitz;
        for _ in 0..NNLS_ITERS {
            let mut change = 0.0;
            let mut size = 0.0;
            let next: Vec<f64> = (0..k)
                .map(|i| {
                    let g: f64 =
                        (0..k).map(|j| gram[i * k + j] * beta[j]).sum::<f64>() - rhs[i];
                    (beta[i] - step * g).max(0.0)
                })
                .collect();
            for (a, b) in next.iter().zip(&beta) {
                change += (a - b) * (a - b);
                size += a * a;
            }
            beta = next;
            if change <= NNLS_RTOL * NNLS_RTOL * size {
                break;
            }
        }
        beta
    }

    /// Nonnegative least-squares weights of the raw atoms.
    pub(super) fn nnls(&self, atoms: &[Vec<f64>]) -> Vec<f64> {
        self.nnls_on(&self.sketches(atoms))
    }

    /// Indices of the `k` atoms with largest NNLS weight on normalized
    /// atom sketches, in their original order.
    pub(super) fn hard_threshold(&self, atoms: &[Vec<f64>], k: usize) -> Vec<usize> {
        let mut columns = self.sketches(atoms);
        for c in columns.iter_mut() {
            let n = norm(c);
            if n > 0.0 {
                c.iter_mut().for_each(|v| *v /= n);
            }
        }
        let beta = self.nnls_on(&columns);
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|a, b| beta[*b].total_cmp(&beta[*a]).then(a.cmp(b)));
        let mut keep: Vec<usize> = order.into_iter().take(k).collect();
        keep.sort_unstable();
        keep
    }

    /// `½‖z − Σ α_k a_k‖²` over the packed vector `[α, atom₁, atom₂, …]`.
    fn joint_objective(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim;
        let pp = self.params_per_atom();
        let k = (x.len()) / (pp + 1);
        let (alpha, params) = x.split_at(k);
        let atoms: Vec<&[f64]> = params.chunks(pp).collect();
        let mut sketches = vec![Complex64::new(0.0, 0.0); k * self.m];
        let mut r = self.z.to_vec();
        for (i, p) in atoms.iter().enumerate() {
            let a = &mut sketches[i * self.m..(i + 1) * self.m];
            self.atom_sketch(p, a);
            for (ri, ai) in r.iter_mut().zip(a.iter()) {
                *ri -= alpha[i] * ai;
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (g_alpha, g_params) = grad.split_at_mut(k);
        let gmm = self.kind == TaskKind::Gmm;
        for i in 0..k {
            let a = &sketches[i * self.m..(i + 1) * self.m];
            let g = &mut g_params[i * pp..(i + 1) * pp];
            let mut ga = 0.0;
            for j in 0..self.m {
                let c = a[j].conj() * r[j];
                ga -= c.re;
                let w = self.freq(j);
                for l in 0..d {
                    g[l] -= w[l] * c.im;
                    if gmm {
                        g[d + l] += 0.5 * w[l] * w[l] * c.re;
                    }
                }
            }
            g_alpha[i] = ga;
            g.iter_mut().for_each(|v| *v *= alpha[i]);
        }
        0.5 * r.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// Joint projected-gradient refinement of weights and atoms.
    pub(super) fn refine(
        &self,
        weights: &mut Vec<f64>,
        atoms: &mut [Vec<f64>],
        constraint: Constraint,
        settings: &DescentSettings,
    ) {
        let k = weights.len();
        let pp = self.params_per_atom();
        let mut x = Vec::with_capacity(k * (pp + 1));
        x.extend_from_slice(weights);
        for p in atoms.iter() {
            x.extend_from_slice(p);
        }
        projected_descent(
            &mut x,
            |x, g| self.joint_objective(x, g),
            |x| {
                let (alpha, params) = x.split_at_mut(k);
                match constraint {
                    Constraint::Nonnegative => alpha.iter_mut().for_each(|a| *a = a.max(0.0)),
                    Constraint::Simplex => project_simplex(alpha),
                }
                for p in params.chunks_mut(pp) {
                    self.project_atom(p);
                }
            },
            settings,
        );
        weights.copy_from_slice(&x[..k]);
        for (i, p) in atoms.iter_mut().enumerate() {
            p.copy_from_slice(&x[k + i * pp..k + (i + 1) * pp]);
        }
    }

    /// Component with the largest total variance and its widest axis.
    pub(super) fn widest_component(&self, atoms: &[Vec<f64>]) -> (usize, usize) {
        let d = self.dim;
        let spread = |p: &[f64], l: usize| p[d + l] * self.side[l] * self.side[l];
        let mut best = (0, 0);
        let mut best_total = f64::NEG_INFINITY;
        for (i, p) in atoms.iter().enumerate() {
            let total: f64 = (0..d).map(|l| spread(p, l)).sum();
            if total > best_total {
                best_total = total;
                let axis = (0..d)
                    .max_by(|a, b| spread(p, *a).total_cmp(&spread(p, *b)).then(b.cmp(a)))
                    .unwrap_or(0);
                best = (i, axis);
            }
        }
        best
    }

    /// Two children of a Gaussian: means at `±√γ` along `axis`, that
    /// variance halved.
    pub(super) fn split(&self, atom: &[f64], axis: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let offset = atom[d + axis].sqrt();
        let mut left = atom.to_vec();
        let mut right = atom.to_vec();
        left[axis] -= offset;
        right[axis] += offset;
        left[d + axis] /= 2.0;
        right[d + axis] /= 2.0;
        self.project_atom(&mut left);
        self.project_atom(&mut right);
        (left, right)
    }

    pub(super) fn to_mixture(&self, weights: &[f64], atoms: &[Vec<f64>]) -> Result<Mixture> {
        let d = self.dim;
        let locations: Vec<Vec<f64>> = atoms
            .iter()
            .map(|p| {
                (0..d)
                    .map(|l| (self.lower[l] + self.side[l] * p[l]).clamp(self.lower[l], self.upper[l]))
                    .collect()
            })
            .collect();
        match self.kind {
            TaskKind::KMeans => Ok(Mixture::Dirac(DiracMixture::new(weights.to_vec(), locations)?)),
            TaskKind::Gmm => {
                let variances = atoms
                    .iter()
                    .map(|p| {
                        (0..d)
                            .map(|l| {
                                let s2 = self.side[l] * self.side[l];
                                (p[d + l] * s2).clamp(self.var_min[l] * s2, self.var_max[l] * s2)
                            })
                            .collect()
                    })
                    .collect();
                Ok(Mixture::Gaussian(GaussianMixture::new(
                    weights.to_vec(),
                    locations,
                    variances,
                )?))
            }
        }
    }
}

pub(super) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}
