//! Noise models, addressable Wiener increments, γ-norms and admissibility checks.
//!
//! Every standard normal is a pure function of `(seed, stream, path, step, mode)`:
//! a ChaCha8 generator keyed by the seed and stream tag is positioned on the
//! path's stream and seeked to a per-step word offset. Increments at any
//! coarser resolution are block sums of the finest-resolution draws, so runs
//! at different step counts see the same Brownian path.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::least_squares;
use crate::error::{check_len, invalid, Anchor, Error, Result, Violation};
use crate::spatial::{check_exponent, weighted_norm, Dimension, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    Interior,
    Boundary,
}

impl NoiseTarget {
    fn tag(self) -> u64 {
        match self {
            NoiseTarget::Interior => 0x1f83_d9ab_fb41_bd6b,
            NoiseTarget::Boundary => 0x5be0_cd19_137e_2179,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// `Q = Σ λ_n e_n ⊗ e_n`, truncated to the listed modes.
    Spectral { lambdas: Vec<f64>, modes: Vec<Vec<f64>>, tail_mass: f64 },
    /// Cylindrical noise on `L²(S)`.
    White,
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    grid: Arc<Grid>,
    target: NoiseTarget,
    kind: NoiseKind,
    /// Integrability exponent of the carrier space (`r` interior, `s` boundary).
    pub exponent: f64,
}

/// Built-in orthonormal families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeBasis {
    /// Interior: `√2 cos(kπs)` (tensorised in 2D); boundary: trigonometric
    /// in arc length (2D) or the even/odd pair of endpoint vectors (1D).
    #[default]
    Cosine,
}

pub const DEFAULT_MODES: usize = 64;

impl NoiseModel {
    pub fn spectral(
        grid: Arc<Grid>,
        target: NoiseTarget,
        lambdas: Vec<f64>,
        modes: Vec<Vec<f64>>,
        tail_mass: f64,
        exponent: f64,
    ) -> Result<Self> {
        if lambdas.len() != modes.len() {
            return Err(invalid(format!("{} eigenvalues for {} modes", lambdas.len(), modes.len())));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(invalid(format!("covariance eigenvalue {l} must be finite and non-negative")));
        }
        let (len, weights) = carrier(&grid, target);
        for m in &modes {
            check_len(len, m.len())?;
        }
        let dev = gram_deviation(&modes, weights);
        if dev > 1e-8 {
            return Err(invalid(format!("modes are not orthonormal: Gram deviation {dev:e}")));
        }
        Ok(Self { grid, target, kind: NoiseKind::Spectral { lambdas, modes, tail_mass }, exponent })
    }

    /// `λ_n = amplitude·n^{−decay}` on the first `count` modes of `basis`.
    /// The mass of the discarded terms `n > count` is reported, not dropped silently.
    pub fn power_law(
        grid: Arc<Grid>,
        target: NoiseTarget,
        amplitude: f64,
        decay: f64,
        count: usize,
        basis: ModeBasis,
        exponent: f64,
    ) -> Result<Self> {
        if count == 0 {
            return Err(invalid("a spectral model needs at least one mode"));
        }
        let modes = basis_modes(&grid, target, basis, count)?;
        let lambdas: Vec<f64> = (1..=count).map(|n| amplitude * (n as f64).powf(-decay)).collect();
        let tail_mass = power_tail(amplitude, decay, count);
        Self::spectral(grid, target, lambdas, modes, tail_mass, exponent)
    }

    pub fn white(grid: Arc<Grid>, target: NoiseTarget) -> Result<Self> {
        if target != NoiseTarget::Interior || grid.dimension() != Dimension::One {
            return Err(Error::rejected(
                Anchor::WhiteNoiseOneDim,
                "space-time white noise is admissible only in the interior of a one-dimensional domain (d = 1, p > 2)",
            ));
        }
        Ok(Self { grid, target, kind: NoiseKind::White, exponent: 2.0 })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn target(&self) -> NoiseTarget {
        self.target
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    /// Number of independent scalar Brownian motions driving the model.
    pub fn rank(&self) -> usize {
        match &self.kind {
            NoiseKind::Spectral { lambdas, .. } => lambdas.len(),
            NoiseKind::White => self.grid.len(),
        }
    }

    pub fn tail_mass(&self) -> f64 {
        match &self.kind {
            NoiseKind::Spectral { tail_mass, .. } => *tail_mass,
            NoiseKind::White => f64::INFINITY,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.kind, NoiseKind::Spectral { lambdas, .. } if lambdas.iter().all(|&l| l == 0.0))
    }

    /// Length of a realization (grid nodes or boundary nodes).
    pub fn carrier_len(&self) -> usize {
        carrier(&self.grid, self.target).0
    }

    /// Maps per-mode Brownian increments `ΔB_n` to a field `Σ √λ_n ΔB_n e_n`;
    /// white noise maps node draws to `ΔB_i / √w_i`.
    pub fn synthesize(&self, db: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.carrier_len()];
        self.synthesize_into(db, &mut out);
        out
    }

    pub fn synthesize_into(&self, db: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.kind {
            NoiseKind::Spectral { lambdas, modes, .. } => {
                for ((l, e), &b) in lambdas.iter().zip(modes).zip(db) {
                    let c = l.sqrt() * b;
                    if c != 0.0 {
                        out.iter_mut().zip(e).for_each(|(o, v)| *o += c * v);
                    }
                }
            }
            NoiseKind::White => {
                for ((o, &b), &w) in out.iter_mut().zip(db).zip(self.grid.weights()) {
                    *o = b / w.sqrt();
                }
            }
        }
    }

    /// Columns `i h_n = √λ_n e_n` of the factor `i` for γ-norm evaluation.
    pub fn factor_columns(&self) -> Vec<Vec<f64>> {
        match &self.kind {
            NoiseKind::Spectral { lambdas, modes, .. } => {
                lambdas.iter().zip(modes).map(|(l, e)| e.iter().map(|v| l.sqrt() * v).collect()).collect()
            }
            NoiseKind::White => {
                let w = self.grid.weights();
                (0..w.len())
                    .map(|i| {
                        let mut c = vec![0.0; w.len()];
                        c[i] = 1.0 / w[i].sqrt();
                        c
                    })
                    .collect()
            }
        }
    }
}

fn carrier(grid: &Grid, target: NoiseTarget) -> (usize, &[f64]) {
    match target {
        NoiseTarget::Interior => (grid.len(), grid.weights()),
        NoiseTarget::Boundary => (grid.boundary_len(), grid.boundary_weights()),
    }
}

fn gram_deviation(modes: &[Vec<f64>], weights: &[f64]) -> f64 {
    let mut dev = 0.0_f64;
    for (i, a) in modes.iter().enumerate() {
        for (j, b) in modes.iter().enumerate().skip(i) {
            let g: f64 = a.iter().zip(b).zip(weights).map(|((x, y), w)| w * x * y).sum();
            dev = dev.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    dev
}

/// `Σ_{n>count} a·n^{−decay}`: explicit sum over a long window plus an integral bound.
fn power_tail(amplitude: f64, decay: f64, count: usize) -> f64 {
    if amplitude == 0.0 {
        return 0.0;
    }
    if decay <= 1.0 {
        return f64::INFINITY;
    }
    let stop = count + 100_000;
    let explicit: f64 = (count + 1..=stop).map(|n| (n as f64).powf(-decay)).sum();
    let rest = (stop as f64 + 0.5).powf(1.0 - decay) / (decay - 1.0);
    amplitude * (explicit + rest)
}

/// The first `count` functions of a built-in orthonormal family.
pub fn basis_modes(grid: &Grid, target: NoiseTarget, basis: ModeBasis, count: usize) -> Result<Vec<Vec<f64>>> {
    let ModeBasis::Cosine = basis;
    match target {
        NoiseTarget::Interior => {
            let n = grid.n_per_axis();
            let pairs: Vec<[usize; 2]> = match grid.dimension() {
                Dimension::One => (0..n).map(|k| [k, 0]).collect(),
                Dimension::Two => {
                    // order by total frequency, then by first index
                    let mut v: Vec<[usize; 2]> = (0..n).flat_map(|a| (0..n).map(move |b| [a, b])).collect();
                    v.sort_by_key(|k| (k[0] + k[1], k[0]));
                    v
                }
            };
            if count > pairs.len() {
                return Err(invalid(format!("{count} modes exceed the {} resolvable on this grid", pairs.len())));
            }
            let c =
                |k: usize, s: f64| if k == 0 { 1.0 } else { 2f64.sqrt() * (k as f64 * std::f64::consts::PI * s).cos() };
            Ok(pairs[..count]
                .iter()
                .map(|k| {
                    grid.coords()
                        .iter()
                        .map(|x| c(k[0], x[0]) * if grid.dimension() == Dimension::Two { c(k[1], x[1]) } else { 1.0 })
                        .collect()
                })
                .collect())
        }
        NoiseTarget::Boundary => match grid.dimension() {
            Dimension::One => {
                let r = 0.5f64.sqrt();
                let all = [vec![r, r], vec![r, -r]];
                if count > 2 {
                    return Err(invalid("the boundary of an interval carries only 2 modes"));
                }
                Ok(all[..count].to_vec())
            }
            Dimension::Two => {
                let nb = grid.boundary_len();
                if count > nb {
                    return Err(invalid(format!("{count} modes exceed the {nb} boundary nodes")));
                }
                let len = grid.boundary_measure();
                let sigma = grid.boundary_arclength();
                let tau = 2.0 * std::f64::consts::PI / len;
                Ok((0..count)
                    .map(|m| {
                        let k = m.div_ceil(2) as f64;
                        sigma
                            .iter()
                            .map(|&s| match m {
                                0 => 1.0 / len.sqrt(),
                                _ if m == nb - 1 && nb.is_multiple_of(2) => (k * tau * s).cos() / len.sqrt(),
                                _ if m % 2 == 1 => (2.0 / len).sqrt() * (k * tau * s).cos(),
                                _ => (2.0 / len).sqrt() * (k * tau * s).sin(),
                            })
                            .collect()
                    })
                    .collect())
            }
        },
    }
}

/// Addressable standard normals and the Brownian increments built from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementStream {
    pub seed: u64,
    pub path: u64,
    /// Finest step count; all increments are block sums at this resolution.
    pub base_steps: usize,
    pub horizon: f64,
}

/// Words reserved per step on a path's stream.
const STEP_STRIDE: u128 = 1 << 32;

impl IncrementStream {
    pub fn new(seed: u64, path: u64, base_steps: usize, horizon: f64) -> Result<Self> {
        if base_steps == 0 || !(horizon > 0.0) {
            return Err(invalid("increment streams need a positive step count and horizon"));
        }
        Ok(Self { seed, path, base_steps, horizon })
    }

    fn generator(&self, target: NoiseTarget) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&target.tag().to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.path);
        rng
    }

    /// Standard normals for modes `0..count` at base step `step`.
    pub fn normals(&self, target: NoiseTarget, step: usize, count: usize) -> Vec<f64> {
        let mut rng = self.generator(target);
        rng.set_word_pos(step as u128 * STEP_STRIDE);
        (0..count).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Brownian increments of `count` modes over step `k` of a lattice with
    /// `steps` steps, which must divide the base step count.
    pub fn increments(&self, target: NoiseTarget, steps: usize, k: usize, count: usize) -> Result<Vec<f64>> {
        let ratio = block_ratio(self.base_steps, steps)?;
        if k >= steps {
            return Err(invalid(format!("step {k} outside a lattice of {steps} steps")));
        }
        let scale = (self.horizon / self.base_steps as f64).sqrt();
        let mut rng = self.generator(target);
        let mut out = vec![0.0; count];
        for j in k * ratio..(k + 1) * ratio {
            rng.set_word_pos(j as u128 * STEP_STRIDE);
            for o in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *o += scale * z;
            }
        }
        Ok(out)
    }
}

fn block_ratio(fine: usize, coarse: usize) -> Result<usize> {
    if coarse == 0 || !fine.is_multiple_of(coarse) {
        return Err(invalid(format!("{fine} steps cannot be coupled to {coarse}: not a divisor")));
    }
    Ok(fine / coarse)
}

/// Realization of `w_k(t_{k+1}) − w_k(t_k)` on a lattice of `steps` steps.
pub fn wiener_increment(model: &NoiseModel, stream: &IncrementStream, steps: usize, k: usize) -> Result<Vec<f64>> {
    let db = stream.increments(model.target(), steps, k, model.rank())?;
    Ok(model.synthesize(&db))
}

/// Sums consecutive blocks of fine increments into coarse ones.
pub fn couple_to_coarse(fine: &[Vec<f64>], coarse_steps: usize) -> Result<Vec<Vec<f64>>> {
    let ratio = block_ratio(fine.len(), coarse_steps)?;
    Ok(fine
        .chunks(ratio)
        .map(|block| {
            let mut acc = vec![0.0; block[0].len()];
            for inc in block {
                acc.iter_mut().zip(inc).for_each(|(a, v)| *a += v);
            }
            acc
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaNorm {
    pub value: f64,
    /// True when `value` is the square-function norm, equivalent to the
    /// γ-norm only up to `p`-dependent constants.
    pub surrogate: bool,
}

/// γ-norm of the finite-rank operator with columns `R h_n` in `L^p(weights)`.
pub fn gamma_norm(columns: &[Vec<f64>], p: f64, weights: &[f64]) -> Result<GammaNorm> {
    for c in columns {
        check_len(weights.len(), c.len())?;
    }
    if p == 2.0 {
        let s: f64 = columns.iter().map(|c| c.iter().zip(weights).map(|(v, w)| w * v * v).sum::<f64>()).sum();
        return Ok(GammaNorm { value: s.sqrt(), surrogate: false });
    }
    let square: Vec<f64> =
        (0..weights.len()).map(|i| columns.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt()).collect();
    check_exponent(p)?;
    Ok(GammaNorm { value: weighted_norm(weights, &square, p), surrogate: true })
}

/// Factor `i` of a covariance with `Q = i iᵀ`, where `Q` acts as `x ↦ C W x`.
#[derive(Debug, Clone)]
pub struct RkhsFactor {
    pub eigenvalues: Vec<f64>,
    /// Weighted-orthonormal eigenvectors `e_n`.
    pub modes: Vec<Vec<f64>>,
}

impl RkhsFactor {
    pub fn columns(&self) -> Vec<Vec<f64>> {
        self.eigenvalues.iter().zip(&self.modes).map(|(l, e)| e.iter().map(|v| l.sqrt() * v).collect()).collect()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Σ_n λ_n e_n e_nᵀ`.
    pub fn reconstruct(&self, len: usize) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(len, len);
        for c in self.columns() {
            for i in 0..len {
                for j in 0..len {
                    q[(i, j)] += c[i] * c[j];
                }
            }
        }
        q
    }

    pub fn into_model(self, grid: Arc<Grid>, target: NoiseTarget, exponent: f64) -> Result<NoiseModel> {
        NoiseModel::spectral(grid, target, self.eigenvalues, self.modes, 0.0, exponent)
    }
}

/// Eigen-factorizes a symmetric PSD covariance kernel on a weighted carrier.
pub fn rkhs_factorize(kernel: &DMatrix<f64>, weights: &[f64]) -> Result<RkhsFactor> {
    let n = weights.len();
    if kernel.nrows() != n || kernel.ncols() != n {
        return Err(Error::ShapeMismatch { expected: n, found: kernel.nrows() });
    }
    let scale = kernel.amax().max(f64::MIN_POSITIVE);
    let asym = (kernel - kernel.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(invalid(format!("covariance is not symmetric (asymmetry {asym:e})")));
    }
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let m = DMatrix::from_fn(n, n, |i, j| sw[i] * 0.5 * (kernel[(i, j)] + kernel[(j, i)]) * sw[j]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut eigenvalues = Vec::new();
    let mut modes = Vec::new();
    let floor = 1e-12 * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    for k in order {
        let l = eig.eigenvalues[k];
        if l < -1e-8 {
            return Err(invalid(format!("covariance is not positive semidefinite (eigenvalue {l:e})")));
        }
        if l > floor && kernel.amax() > 0.0 {
            eigenvalues.push(l);
            modes.push((0..n).map(|i| eig.eigenvectors[(i, k)] / sw[i]).collect());
        }
    }
    Ok(RkhsFactor { eigenvalues, modes })
}

/// Admissibility regimes for the driving noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum ExampleRegime {
    /// Boundary covariance with `Σ λ_n ‖e_n‖_∞² < ∞`.
    SummableBoundary { lambdas: Vec<f64>, sup_norms: Vec<f64> },
    /// RKHS boundary noise in `L^s(∂S)` with a multiplier in `L^q(∂S)`.
    Rkhs { p: f64, q: f64, s: f64 },
    /// Interior noise in `L^r(S)`.
    InteriorLr { d: usize, r: f64, theta_b: f64 },
    /// Space-time white noise.
    White { d: usize, p: f64, theta_b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    /// Partial sums `Σ_{n≤N} λ_n ‖e_n‖_∞²` for the summable regime.
    pub partial_sums: Vec<f64>,
    /// Fitted log-log slope of the summand tail.
    pub tail_slope: Option<f64>,
}

fn open_interval(x: f64, lo: f64, hi: f64) -> bool {
    x > lo && x < hi
}

pub fn validate_example(regime: &ExampleRegime) -> Result<ExampleReport> {
    let mut violations = Vec::new();
    let mut partial_sums = Vec::new();
    let mut tail_slope = None;
    match regime {
        ExampleRegime::SummableBoundary { lambdas, sup_norms } => {
            if lambdas.len() != sup_norms.len() || lambdas.len() < 8 {
                return Err(invalid("summability check needs at least 8 paired (λ_n, ‖e_n‖_∞) values"));
            }
            let terms: Vec<f64> = lambdas.iter().zip(sup_norms).map(|(l, e)| l * e * e).collect();
            if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
                violations.push(Violation::new(Anchor::SummableBoundaryCovariance, format!("negative eigenvalue {l}")));
            }
            let mut acc = 0.0;
            for t in &terms {
                acc += t;
                partial_sums.push(acc);
            }
            let start = terms.len() / 2;
            let (xs, ys): (Vec<f64>, Vec<f64>) = (start..terms.len())
                .filter(|&i| terms[i] > 0.0)
                .map(|i| (((i + 1) as f64).ln(), terms[i].ln()))
                .unzip();
            if xs.len() >= 2 {
                let (slope, _) = least_squares(&xs, &ys);
                tail_slope = Some(slope);
                if slope >= -1.02 {
                    violations.push(Violation::new(
                        Anchor::SummableBoundaryCovariance,
                        format!(
                            "Σ λ_n ‖e_n‖_∞² appears divergent: summands decay like n^{slope:.3}, need faster than n^-1"
                        ),
                    ));
                }
            }
        }
        ExampleRegime::Rkhs { p, q, s } => {
            let (p, q, s) = (*p, *q, *s);
            if !(q > p) {
                violations.push(Violation::new(
                    Anchor::RkhsBoundaryNoise,
                    format!("q = {q} must lie in (p, ∞] with p = {p}"),
                ));
            }
            if !(s >= p && s.is_finite()) {
                violations.push(Violation::new(
                    Anchor::RkhsBoundaryNoise,
                    format!("s = {s} must lie in [p, ∞) with p = {p}"),
                ));
            }
            let gap = 1.0 / p - 1.0 / q - 1.0 / s;
            if !(gap.abs() <= 1e-12) {
                violations.push(Violation::new(
                    Anchor::RkhsBoundaryNoise,
                    format!("1/p = 1/q + 1/s fails: 1/p − 1/q − 1/s = {gap:e}"),
                ));
            }
        }
        ExampleRegime::InteriorLr { d, r, theta_b } => {
            let (d, r, t) = (*d as f64, *r, *theta_b);
            if !(r > d && r.is_finite()) {
                violations
                    .push(Violation::new(Anchor::InteriorNoiseLr, format!("r = {r} must lie in (d, ∞) with d = {d}")));
            } else if !open_interval(t, d / (2.0 * r), 0.5) {
                violations.push(Violation::new(
                    Anchor::InteriorNoiseLr,
                    format!("θ_B = {t} must lie in (d/(2r), ½) = ({}, 0.5)", d / (2.0 * r)),
                ));
            }
        }
        ExampleRegime::White { d, p, theta_b } => {
            let (p, t) = (*p, *theta_b);
            if *d != 1 || !(p > 2.0) {
                violations.push(Violation::new(
                    Anchor::WhiteNoiseOneDim,
                    format!("white noise needs d = 1 and p > 2, got d = {d}, p = {p}"),
                ));
            } else {
                let lo = 1.0 / (2.0 * p) + 0.25;
                if !open_interval(t, lo, 0.5) {
                    violations.push(Violation::new(
                        Anchor::WhiteNoiseOneDim,
                        format!("θ_B = {t} must lie in (1/(2p) + ¼, ½) = ({lo}, 0.5)"),
                    ));
                }
            }
        }
    }
    Ok(ExampleReport { passed: violations.is_empty(), violations, partial_sums, tail_slope })
}
