//! Divergence-form operators `A(t)u = ∇·(a(t,·)∇u) + a0(t,·)u` with the
//! homogeneous conormal condition `a∇u·n = 0`, discretized by vertex-centred
//! finite volumes.
//!
//! The zero boundary flux is built into the stencil (ghost-flux reflection),
//! so `A_h(t)` is symmetric in the volume-weighted inner product and maps
//! constants to `a0·1`. Fractional powers of `w − A_h(t)` are evaluated from a
//! dense eigendecomposition in that inner product.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::error::{check_len, invalid, Error, Result};
use crate::output::fmt17;
use crate::spatial::{check_exponent, weighted_norm, Dimension, Grid, GridFunction};

/// Time-dependent coefficients of the elliptic operator.
pub trait CoefficientField: Send + Sync + fmt::Debug {
    /// Diffusion tensor entries `[a11, a12, a22]`; only `a11` is read in 1D.
    fn diffusion(&self, t: f64, x: [f64; 2]) -> [f64; 3];
    fn potential(&self, t: f64, x: [f64; 2]) -> f64;
    /// Claimed Hölder exponent of `t ↦ a(t,·)` in the sup norm.
    fn holder_exponent(&self) -> f64;
    /// Claimed ellipticity constant.
    fn ellipticity(&self) -> f64;
    fn is_autonomous(&self) -> bool;
}

fn one() -> f64 {
    1.0
}

/// Coefficient catalog selectable from experiment files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coefficients {
    Constant {
        a: f64,
        #[serde(default)]
        a0: f64,
    },
    /// Constant diagonal tensor `diag(a11, a22)` (2D).
    Diagonal {
        a11: f64,
        a22: f64,
        #[serde(default)]
        a0: f64,
    },
    /// `a(t,s) = base + space_amplitude·sin(πs₁) + time_amplitude·t^mu`.
    Separable {
        base: f64,
        #[serde(default)]
        space_amplitude: f64,
        #[serde(default)]
        time_amplitude: f64,
        #[serde(default = "one")]
        mu: f64,
        #[serde(default)]
        a0: f64,
    },
    /// `a = before` for `t < t_jump`, `after` otherwise.
    Step {
        before: f64,
        after: f64,
        t_jump: f64,
        #[serde(default)]
        a0: f64,
    },
}

impl Coefficients {
    pub fn constant(a: f64, a0: f64) -> Self {
        Coefficients::Constant { a, a0 }
    }

    fn scalar(&self, t: f64, x: [f64; 2]) -> f64 {
        match *self {
            Coefficients::Constant { a, .. } => a,
            Coefficients::Diagonal { a11, .. } => a11,
            Coefficients::Separable { base, space_amplitude, time_amplitude, mu, .. } => {
                base + space_amplitude * (std::f64::consts::PI * x[0]).sin() + time_amplitude * t.max(0.0).powf(mu)
            }
            Coefficients::Step { before, after, t_jump, .. } => {
                if t < t_jump {
                    before
                } else {
                    after
                }
            }
        }
    }
}

impl CoefficientField for Coefficients {
    fn diffusion(&self, t: f64, x: [f64; 2]) -> [f64; 3] {
        match *self {
            Coefficients::Diagonal { a11, a22, .. } => [a11, 0.0, a22],
            _ => {
                let a = self.scalar(t, x);
                [a, 0.0, a]
            }
        }
    }

    fn potential(&self, _t: f64, _x: [f64; 2]) -> f64 {
        match *self {
            Coefficients::Constant { a0, .. }
            | Coefficients::Diagonal { a0, .. }
            | Coefficients::Separable { a0, .. }
            | Coefficients::Step { a0, .. } => a0,
        }
    }

    fn holder_exponent(&self) -> f64 {
        match *self {
            Coefficients::Separable { time_amplitude, mu, .. } if time_amplitude != 0.0 => mu.min(1.0),
            _ => 1.0,
        }
    }

    fn ellipticity(&self) -> f64 {
        match *self {
            Coefficients::Constant { a, .. } => a,
            Coefficients::Diagonal { a11, a22, .. } => a11.min(a22),
            Coefficients::Separable { base, space_amplitude, time_amplitude, .. } => {
                base + space_amplitude.min(0.0) + time_amplitude.min(0.0)
            }
            Coefficients::Step { before, after, .. } => before.min(after),
        }
    }

    fn is_autonomous(&self) -> bool {
        match *self {
            Coefficients::Separable { time_amplitude, .. } => time_amplitude == 0.0,
            Coefficients::Step { .. } => false,
            _ => true,
        }
    }
}

fn min_eigenvalue(d: [f64; 3], dim: Dimension) -> f64 {
    match dim {
        Dimension::One => d[0],
        Dimension::Two => {
            let (a, b, c) = (d[0], d[1], d[2]);
            0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
        }
    }
}

/// An assembled `A_h(t)` in compressed-row form.
#[derive(Debug, Clone)]
pub struct Operator {
    t: f64,
    bandwidth: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Operator {
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn size(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.size()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.size())
            .flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k])))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        for (i, j, v) in self.entries() {
            m[(i, j)] += v;
        }
        m
    }

    /// Band storage of `alpha·I + beta·A`.
    pub fn band_combination(&self, alpha: f64, beta: f64) -> BandMatrix {
        let n = self.size();
        let mut band = BandMatrix::zeros(n, self.bandwidth, self.bandwidth);
        for i in 0..n {
            band.add(i, i, alpha);
        }
        for (i, j, v) in self.entries() {
            band.add(i, j, beta * v);
        }
        band
    }

    /// Largest `|w_i A_ij − w_j A_ji|`.
    pub fn weighted_asymmetry(&self, weights: &[f64]) -> f64 {
        let dense = self.to_dense();
        let mut worst = 0.0_f64;
        for (i, j, _) in self.entries() {
            worst = worst.max((weights[i] * dense[(i, j)] - weights[j] * dense[(j, i)]).abs());
        }
        worst
    }

    /// Writes `row col value` lines.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, j, v) in self.entries() {
            writeln!(w, "{i} {j} {}", fmt17(v))?;
        }
        Ok(())
    }
}

/// Weighted eigendecomposition `A_h = V diag(λ) V^T W` with `V^T W V = I`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending.
    eigenvalues: Vec<f64>,
    /// Euclidean-orthonormal eigenvectors of `W^{1/2} A W^{-1/2}` (columns).
    q: DMatrix<f64>,
    sqrt_w: Vec<f64>,
}

impl Spectrum {
    fn new(op: &Operator, weights: &[f64]) -> Self {
        let n = op.size();
        let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let mut s = DMatrix::zeros(n, n);
        for (i, j, v) in op.entries() {
            s[(i, j)] += sqrt_w[i] * v / sqrt_w[j];
        }
        let sym = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let q = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
        Self { eigenvalues, q, sqrt_w }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("empty spectrum")
    }

    /// Eigenvector `k` (ascending order), normalized in the weighted inner product.
    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        (0..self.q.nrows()).map(|i| self.q[(i, k)] / self.sqrt_w[i]).collect()
    }

    /// `V diag(g(λ)) V^T W x`.
    pub fn apply_function(&self, x: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.q.nrows();
        let scaled = nalgebra::DVector::from_iterator(n, x.iter().zip(&self.sqrt_w).map(|(v, s)| v * s));
        let mut c = self.q.tr_mul(&scaled);
        for (ci, &l) in c.iter_mut().zip(&self.eigenvalues) {
            *ci *= g(l);
        }
        let y = &self.q * c;
        y.iter().zip(&self.sqrt_w).map(|(v, s)| v / s).collect()
    }
}

fn key(t: f64) -> u64 {
    t.to_bits()
}

/// `A_h(t)` on a grid, with caches filled by a preparation pass.
#[derive(Debug, Clone)]
pub struct OperatorFamily {
    grid: Arc<Grid>,
    coeffs: Arc<dyn CoefficientField>,
    shift: f64,
    operators: BTreeMap<u64, Arc<Operator>>,
    spectra: BTreeMap<u64, Arc<Spectrum>>,
}

impl OperatorFamily {
    pub fn new(grid: Arc<Grid>, coeffs: Arc<dyn CoefficientField>, shift: f64) -> Result<Self> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(invalid(format!("shift w must be finite and non-negative, got {shift}")));
        }
        Ok(Self { grid, coeffs, shift, operators: BTreeMap::new(), spectra: BTreeMap::new() })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coefficients(&self) -> &Arc<dyn CoefficientField> {
        &self.coeffs
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn is_autonomous(&self) -> bool {
        self.coeffs.is_autonomous()
    }

    fn canonical(&self, t: f64) -> f64 {
        if self.is_autonomous() {
            0.0
        } else {
            t
        }
    }

    /// Assembles and caches `A_h(t)` for each lattice time.
    pub fn prepare(&mut self, times: &[f64]) -> Result<()> {
        for &t in times {
            let t = self.canonical(t);
            if !self.operators.contains_key(&key(t)) {
                let op = assemble(self.coeffs.as_ref(), &self.grid, t)?;
                self.check_shift(&op)?;
                self.operators.insert(key(t), Arc::new(op));
            }
        }
        Ok(())
    }

    /// Also caches the spectral decomposition at each time.
    pub fn prepare_spectra(&mut self, times: &[f64]) -> Result<()> {
        self.prepare(times)?;
        for &t in times {
            let t = self.canonical(t);
            if !self.spectra.contains_key(&key(t)) {
                let op = self.operators[&key(t)].clone();
                self.spectra.insert(key(t), Arc::new(Spectrum::new(&op, self.grid.weights())));
            }
        }
        Ok(())
    }

    fn check_shift(&self, op: &Operator) -> Result<()> {
        // ⟨A u, u⟩_w ≤ max a0 ‖u‖², so max a0 < w certifies the shifted spectrum.
        let t = op.time();
        let bound = self.grid.coords().iter().map(|&x| self.coeffs.potential(t, x)).fold(f64::NEG_INFINITY, f64::max);
        if bound - self.shift < 0.0 {
            return Ok(());
        }
        let top = Spectrum::new(op, self.grid.weights()).max_eigenvalue();
        if top - self.shift < 0.0 {
            Ok(())
        } else {
            Err(Error::ShiftedSpectrum { t, max_eigenvalue: top - self.shift })
        }
    }

    /// `A_h(t)`: cached on prepared times, assembled on demand otherwise.
    pub fn operator(&self, t: f64) -> Result<Arc<Operator>> {
        let t = self.canonical(t);
        if let Some(op) = self.operators.get(&key(t)) {
            return Ok(Arc::clone(op));
        }
        let op = assemble(self.coeffs.as_ref(), &self.grid, t)?;
        self.check_shift(&op)?;
        Ok(Arc::new(op))
    }

    pub fn spectrum(&self, t: f64) -> Result<Arc<Spectrum>> {
        let t = self.canonical(t);
        if let Some(s) = self.spectra.get(&key(t)) {
            return Ok(Arc::clone(s));
        }
        let op = self.operator(t)?;
        Ok(Arc::new(Spectrum::new(&op, self.grid.weights())))
    }

    pub fn apply(&self, t: f64, f: &GridFunction) -> Result<GridFunction> {
        check_len(self.grid.len(), f.values().len())?;
        let y = self.operator(t)?.apply(f.values());
        GridFunction::new(Arc::clone(&self.grid), y)
    }

    /// Factorization of `λ − A_h(t)`.
    pub fn resolvent(&self, t: f64, lambda: f64) -> Result<BandLu> {
        self.operator(t)?.band_combination(lambda, -1.0).factorize(lambda)
    }

    /// Solves `(λ − A_h(t)) x = rhs`.
    pub fn resolvent_apply(&self, t: f64, lambda: f64, rhs: &GridFunction) -> Result<GridFunction> {
        check_len(self.grid.len(), rhs.values().len())?;
        let lu = self.resolvent(t, lambda)?;
        let op = self.operator(t)?;
        let mut x = lu.solve(rhs.values());
        // one step of iterative refinement
        let ax = op.apply(&x);
        let r: Vec<f64> = rhs.values().iter().zip(&x).zip(&ax).map(|((b, xi), a)| b - (lambda * xi - a)).collect();
        let dx = lu.solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        GridFunction::new(Arc::clone(&self.grid), x)
    }

    /// `(w − A_h(t))^θ f` for `θ ∈ [−1, 1]`.
    pub fn fractional_power_apply(&self, t: f64, theta: f64, f: &GridFunction) -> Result<GridFunction> {
        let y = self.fractional_power_values(t, theta, f.values())?;
        GridFunction::new(Arc::clone(&self.grid), y)
    }

    pub fn fractional_power_values(&self, t: f64, theta: f64, f: &[f64]) -> Result<Vec<f64>> {
        if !(-1.0..=1.0).contains(&theta) {
            return Err(invalid(format!("fractional power exponent must lie in [-1, 1], got {theta}")));
        }
        check_len(self.grid.len(), f.len())?;
        if theta == 0.0 {
            return Ok(f.to_vec());
        }
        let w = self.shift;
        Ok(self.spectrum(t)?.apply_function(f, |l| (w - l).powf(theta)))
    }

    /// `‖(w − A_h(t))^η f‖_{L^p}` for `η ∈ [0, 1]`.
    pub fn fractional_norm(&self, t: f64, eta: f64, f: &GridFunction, p: f64) -> Result<f64> {
        self.fractional_norm_values(t, eta, f.values(), p)
    }

    pub fn fractional_norm_values(&self, t: f64, eta: f64, f: &[f64], p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(invalid(format!("fractional norm order must lie in [0, 1], got {eta}")));
        }
        check_exponent(p)?;
        let g = self.fractional_power_values(t, eta, f)?;
        Ok(weighted_norm(self.grid.weights(), &g, p))
    }

    /// Smallest `K` with `‖(λ − A_h(t))⁻¹‖ ≤ K/(1 + |λ − w|)` over the samples,
    /// using the exact operator norm from the spectrum.
    pub fn resolvent_probe(&self, times: &[f64], lambdas: &[f64]) -> Result<ResolventProbe> {
        let mut k_fit = 0.0_f64;
        let mut worst = (f64::NAN, f64::NAN);
        for &t in times {
            let spec = self.spectrum(t)?;
            for &l in lambdas {
                let dist = spec.eigenvalues().iter().map(|&e| (l - e).abs()).fold(f64::INFINITY, f64::min);
                let k = (1.0 + (l - self.shift).abs()) / dist;
                if k > k_fit {
                    k_fit = k;
                    worst = (t, l);
                }
            }
        }
        Ok(ResolventProbe { k_fit, worst_time: worst.0, worst_lambda: worst.1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventProbe {
    pub k_fit: f64,
    pub worst_time: f64,
    pub worst_lambda: f64,
}

/// Finite-volume assembly of `A_h(t)` with zero boundary flux.
pub fn assemble(coeffs: &dyn CoefficientField, grid: &Grid, t: f64) -> Result<Operator> {
    let dim = grid.dimension();
    let kappa = coeffs.ellipticity();
    let check = |x: [f64; 2]| -> Result<[f64; 3]> {
        let d = coeffs.diffusion(t, x);
        let m = min_eigenvalue(d, dim);
        if !(m > 0.0) || m < kappa - 1e-12 {
            return Err(Error::Ellipticity { t, position: x, value: m });
        }
        if dim == Dimension::Two && d[1] != 0.0 {
            return Err(invalid("off-diagonal diffusion is not supported by the five-point stencil"));
        }
        Ok(d)
    };
    let n = grid.n_per_axis();
    let h = grid.h();
    let w = grid.weights();
    let coords = grid.coords();
    for &x in coords {
        check(x)?;
    }
    let size = grid.len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(5); size];
    let mut couple = |i: usize, j: usize, c: f64| {
        rows[i].push((j, c));
        rows[j].push((i, c));
    };
    match dim {
        Dimension::One => {
            for i in 0..n {
                let mid = [(i as f64 + 0.5) * h, 0.0];
                let a = check(mid)?[0];
                couple(i, i + 1, a / h);
            }
        }
        Dimension::Two => {
            let m = n + 1;
            for j in 0..m {
                let face = if j == 0 || j == n { 0.5 * h } else { h };
                for i in 0..n {
                    let mid = [(i as f64 + 0.5) * h, j as f64 * h];
                    let a = check(mid)?[0];
                    couple(j * m + i, j * m + i + 1, a * face / h);
                }
            }
            for i in 0..m {
                let face = if i == 0 || i == n { 0.5 * h } else { h };
                for j in 0..n {
                    let mid = [i as f64 * h, (j as f64 + 0.5) * h];
                    let a = check(mid)?[2];
                    couple(j * m + i, (j + 1) * m + i, a * face / h);
                }
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(size + 1);
    let mut cols = Vec::with_capacity(size * 5);
    let mut vals = Vec::with_capacity(size * 5);
    row_ptr.push(0);
    for (i, row) in rows.iter_mut().enumerate() {
        row.sort_by_key(|&(j, _)| j);
        let total: f64 = row.iter().map(|&(_, c)| c).sum();
        let a0 = coeffs.potential(t, coords[i]);
        let mut diag_done = false;
        for &(j, c) in row.iter() {
            if !diag_done && j > i {
                cols.push(i);
                vals.push(-total / w[i] + a0);
                diag_done = true;
            }
            cols.push(j);
            vals.push(c / w[i]);
        }
        if !diag_done {
            cols.push(i);
            vals.push(-total / w[i] + a0);
        }
        row_ptr.push(cols.len());
    }
    let bandwidth = match dim {
        Dimension::One => 1,
        Dimension::Two => n + 1,
    };
    Ok(Operator { t, bandwidth, row_ptr, cols, vals })
}

/// Audit of the coefficient hypotheses on sample points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub kappa_fit: f64,
    pub kappa_claimed: f64,
    pub ellipticity_ok: bool,
    /// `None` when `a` does not vary in time at the sampled points.
    pub holder_exponent_fit: Option<f64>,
    pub holder_constant_fit: Option<f64>,
    pub mu_claimed: f64,
    pub holder_ok: bool,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.ellipticity_ok && self.holder_ok
    }
}

/// Samples ellipticity and the time-Hölder modulus of `a` on `[0, horizon]`.
///
/// The Hölder fit regresses `log max|a(t+ℓ,s) − a(t,s)|` on `log ℓ` over
/// dyadic lags `ℓ`; it passes when the fitted exponent is at least `μ − 0.1`.
pub fn validate_assumptions(
    coeffs: &dyn CoefficientField,
    dim: Dimension,
    horizon: f64,
    time_samples: usize,
    space_samples: usize,
) -> Result<AssumptionReport> {
    if time_samples < 8 || space_samples < 8 {
        return Err(invalid("validation needs at least 8 samples per axis"));
    }
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let levels = (time_samples as f64).log2().ceil() as u32;
    let m = 1usize << levels;
    let dt = horizon / m as f64;
    let axis: Vec<f64> = (0..space_samples).map(|i| i as f64 / (space_samples - 1) as f64).collect();
    let points: Vec<[f64; 2]> = match dim {
        Dimension::One => axis.iter().map(|&s| [s, 0.0]).collect(),
        Dimension::Two => axis.iter().flat_map(|&s2| axis.iter().map(move |&s1| [s1, s2])).collect(),
    };

    let mut kappa_fit = f64::INFINITY;
    // values[k][p]: tensor entries at time k·dt and point p
    let values: Vec<Vec<[f64; 3]>> =
        (0..=m).map(|k| points.iter().map(|&x| coeffs.diffusion(k as f64 * dt, x)).collect()).collect();
    for row in &values {
        for &d in row {
            kappa_fit = kappa_fit.min(min_eigenvalue(d, dim));
        }
    }
    let kappa_claimed = coeffs.ellipticity();
    let ellipticity_ok = kappa_fit > 0.0 && kappa_fit >= kappa_claimed - 1e-12;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lag = 1usize;
    while lag < m {
        let mut d = 0.0_f64;
        for k in 0..=m - lag {
            for (a, b) in values[k + lag].iter().zip(&values[k]) {
                for c in 0..3 {
                    d = d.max((a[c] - b[c]).abs());
                }
            }
        }
        if d > 0.0 {
            xs.push((lag as f64 * dt).ln());
            ys.push(d.ln());
        }
        lag *= 2;
    }
    let mu_claimed = coeffs.holder_exponent();
    let (holder_exponent_fit, holder_constant_fit, holder_ok) = if xs.is_empty() {
        (None, None, true)
    } else if xs.len() == 1 {
        (Some(0.0), Some(ys[0].exp()), mu_claimed <= 0.1)
    } else {
        let (slope, intercept) = crate::diagnostics::least_squares(&xs, &ys);
        let constant = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x).exp()).fold(intercept.exp(), f64::max);
        (Some(slope), Some(constant), slope >= mu_claimed - 0.1)
    };
    Ok(AssumptionReport {
        kappa_fit,
        kappa_claimed,
        ellipticity_ok,
        holder_exponent_fit,
        holder_constant_fit,
        mu_claimed,
        holder_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn family(dim: usize, n: usize, c: Coefficients, w: f64) -> OperatorFamily {
        let grid = Arc::new(Grid::new(dim, n).unwrap());
        OperatorFamily::new(grid, Arc::new(c), w).unwrap()
    }

    fn lcg_vec(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn laplacian_stencil_on_four_cells() {
        let fam = family(1, 4, Coefficients::constant(1.0, 0.0), 1.0);
        let a = fam.operator(0.0).unwrap().to_dense();
        let h2 = 1.0 / 16.0;
        for i in 1..4 {
            assert!((a[(i, i - 1)] * h2 - 1.0).abs() < 1e-12);
            assert!((a[(i, i)] * h2 + 2.0).abs() < 1e-12);
            assert!((a[(i, i + 1)] * h2 - 1.0).abs() < 1e-12);
        }
        // half-cell zero-flux rows: (−1, 1)/(h²/2)
        assert!((a[(0, 0)] * h2 + 2.0).abs() < 1e-12);
        assert!((a[(0, 1)] * h2 - 2.0).abs() < 1e-12);
        let ones = vec![1.0; 5];
        assert!(fam.operator(0.0).unwrap().apply(&ones).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn constants_map_to_potential() {
        let c = Coefficients::Separable { base: 1.0, space_amplitude: 0.5, time_amplitude: 0.0, mu: 1.0, a0: -0.7 };
        for dim in [1, 2] {
            let fam = family(dim, 8, c.clone(), 1.0);
            let n = fam.grid().len();
            let y = fam.operator(0.3).unwrap().apply(&vec![1.0; n]);
            assert!(y.iter().all(|v| (v + 0.7).abs() < 1e-10));
        }
    }

    #[test]
    fn neumann_spectrum_of_the_interval() {
        let fam = family(1, 256, Coefficients::constant(1.0, 0.0), 1.0);
        let spec = fam.spectrum(0.0).unwrap();
        let ev = spec.eigenvalues();
        let top: Vec<f64> = ev.iter().rev().take(5).copied().collect();
        assert!(top[0].abs() < 1e-8);
        for (k, &l) in top.iter().enumerate().skip(1) {
            let exact = -((k as f64) * PI).powi(2);
            assert!(((l - exact) / exact).abs() < 0.02, "k={k}: {l} vs {exact}");
        }
    }

    #[test]
    fn potential_shifts_spectrum_by_one() {
        let f0 = family(1, 32, Coefficients::constant(1.0, 0.0), 1.0);
        let f1 = family(1, 32, Coefficients::constant(1.0, -1.0), 1.0);
        let (a, b) = (f0.spectrum(0.0).unwrap(), f1.spectrum(0.0).unwrap());
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            assert!((x - 1.0 - y).abs() < 1e-8);
        }
    }

    #[test]
    fn weighted_symmetry_and_negativity() {
        let c = Coefficients::Separable { base: 1.0, space_amplitude: 0.5, time_amplitude: 0.3, mu: 0.8, a0: 0.0 };
        for dim in [1, 2] {
            let mut fam = family(dim, 12, c.clone(), 1.0);
            fam.prepare_spectra(&[0.0, 0.5]).unwrap();
            let g = Arc::clone(fam.grid());
            for t in [0.0, 0.5] {
                let op = fam.operator(t).unwrap();
                assert!(op.weighted_asymmetry(g.weights()) < 1e-10);
                let f = lcg_vec(1, g.len());
                let q = lcg_vec(2, g.len());
                let lhs = g.inner(&op.apply(&f), &q);
                let rhs = g.inner(&f, &op.apply(&q));
                assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
                assert!(fam.spectrum(t).unwrap().max_eigenvalue() - fam.shift() < 0.0);
            }
        }
    }

    #[test]
    fn assembly_rejects_degenerate_diffusion() {
        let grid = Grid::new(1, 8).unwrap();
        let c = Coefficients::Separable { base: 0.2, space_amplitude: -0.5, time_amplitude: 0.0, mu: 1.0, a0: 0.0 };
        match assemble(&c, &grid, 0.25) {
            Err(Error::Ellipticity { t, .. }) => assert_eq!(t, 0.25),
            other => panic!("expected ellipticity failure, got {other:?}"),
        }
    }

    #[test]
    fn positive_potential_needs_a_larger_shift() {
        let grid = Arc::new(Grid::new(1, 8).unwrap());
        let fam = OperatorFamily::new(Arc::clone(&grid), Arc::new(Coefficients::constant(1.0, 2.0)), 1.0).unwrap();
        assert!(matches!(fam.operator(0.0), Err(Error::ShiftedSpectrum { .. })));
        let ok = OperatorFamily::new(grid, Arc::new(Coefficients::constant(1.0, 2.0)), 2.5).unwrap();
        assert!(ok.operator(0.0).is_ok());
    }

    #[test]
    fn resolvent_examples() {
        let fam = family(1, 64, Coefficients::constant(1.0, 0.0), 1.0);
        let g = Arc::clone(fam.grid());
        let zero = GridFunction::zeros(Arc::clone(&g));
        assert!(fam.resolvent_apply(0.0, 2.0, &zero).unwrap().values().iter().all(|&v| v == 0.0));
        let one = GridFunction::constant(Arc::clone(&g), 1.0);
        let x = fam.resolvent_apply(0.0, 1.0, &one).unwrap();
        assert!(x.values().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let rhs = GridFunction::new(Arc::clone(&g), lcg_vec(3, g.len())).unwrap();
        let x = fam.resolvent_apply(0.0, 3.7, &rhs).unwrap();
        let ax = fam.apply(0.0, &x).unwrap();
        let res: Vec<f64> =
            rhs.values().iter().zip(x.values()).zip(ax.values()).map(|((b, x), a)| b - (3.7 * x - a)).collect();
        assert!(g.norm(&res, 2.0) <= 1e-10 * rhs.lp_norm(2.0).unwrap());
    }

    #[test]
    fn resolvent_reports_spectral_lambda() {
        let fam = family(1, 8, Coefficients::constant(1.0, 0.0), 1.0);
        match fam.resolvent(0.0, 0.0) {
            Err(Error::SingularSystem { lambda, .. }) => assert_eq!(lambda, 0.0),
            other => panic!("expected singular system, got {other:?}"),
        }
    }

    #[test]
    fn resolvent_bound_sweep() {
        let fam = family(1, 48, Coefficients::constant(1.0, 0.0), 1.0);
        let g = Arc::clone(fam.grid());
        let lambdas: Vec<f64> = (0..=16).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
        let probe = fam.resolvent_probe(&[0.0], &lambdas).unwrap();
        assert!(probe.k_fit <= 2.0, "{probe:?}");
        // solver ratios stay below the spectral bound
        let spec = fam.spectrum(0.0).unwrap();
        for &l in &lambdas {
            let rhs = GridFunction::new(Arc::clone(&g), lcg_vec(l.to_bits(), g.len())).unwrap();
            let x = fam.resolvent_apply(0.0, l, &rhs).unwrap();
            let ratio = x.lp_norm(2.0).unwrap() / rhs.lp_norm(2.0).unwrap();
            let exact = 1.0 / spec.eigenvalues().iter().map(|e| l - e).fold(f64::INFINITY, f64::min);
            assert!(ratio <= exact * (1.0 + 1e-10));
            assert!(ratio * (1.0 + l) <= 2.0);
        }
    }

    #[test]
    fn fractional_powers() {
        let fam = family(
            1,
            40,
            Coefficients::Separable { base: 1.0, space_amplitude: 0.5, time_amplitude: 0.0, mu: 1.0, a0: 0.0 },
            1.0,
        );
        let g = Arc::clone(fam.grid());
        let f = GridFunction::new(Arc::clone(&g), lcg_vec(9, g.len())).unwrap();
        let id = fam.fractional_power_apply(0.0, 0.0, &f).unwrap();
        assert_eq!(id, f);

        let one = fam.fractional_power_apply(0.0, 1.0, &f).unwrap();
        let af = fam.apply(0.0, &f).unwrap();
        for ((y, v), a) in one.values().iter().zip(f.values()).zip(af.values()) {
            assert!((y - (v - a)).abs() < 1e-8 * (1.0 + a.abs()));
        }

        let half = fam.fractional_power_apply(0.0, 0.5, &f).unwrap();
        let twice = fam.fractional_power_apply(0.0, 0.5, &half).unwrap();
        for (x, y) in twice.values().iter().zip(one.values()) {
            assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()), "{x} {y}");
        }

        assert!(fam.fractional_power_apply(0.0, 1.5, &f).is_err());
    }

    #[test]
    fn fractional_norms() {
        let fam = family(1, 32, Coefficients::constant(1.0, 0.0), 1.0);
        let g = Arc::clone(fam.grid());
        let f = GridFunction::new(Arc::clone(&g), lcg_vec(4, g.len())).unwrap();
        assert_eq!(fam.fractional_norm(0.0, 0.0, &f, 3.0).unwrap(), f.lp_norm(3.0).unwrap());

        let spec = fam.spectrum(0.0).unwrap();
        let k = g.len() - 2;
        let v = GridFunction::new(Arc::clone(&g), spec.eigenvector(k)).unwrap();
        let l = spec.eigenvalues()[k];
        for eta in [0.25, 0.5, 1.0] {
            let nrm = fam.fractional_norm(0.0, eta, &v, 2.0).unwrap();
            assert!((nrm - (1.0 - l).powf(eta)).abs() < 1e-9);
        }

        let u = fam.fractional_power_apply(0.0, -1.0, &f).unwrap();
        let a = fam.fractional_norm(0.0, 0.25, &u, 2.0).unwrap();
        let b = fam.fractional_norm(0.0, 0.5, &u, 2.0).unwrap();
        assert!(a <= b);
        assert!(fam.fractional_norm(0.0, 1.2, &u, 2.0).is_err());
    }

    #[test]
    fn assumption_audit() {
        let smooth = Coefficients::Separable { base: 1.0, space_amplitude: 0.5, time_amplitude: 0.0, mu: 1.0, a0: 0.0 };
        let r = validate_assumptions(&smooth, Dimension::One, 1.0, 16, 33).unwrap();
        assert!(r.passed());
        assert!((r.kappa_fit - 1.0).abs() < 1e-12, "{}", r.kappa_fit);

        let dip = Coefficients::Separable { base: 1.0, space_amplitude: -0.5, time_amplitude: 0.0, mu: 1.0, a0: 0.0 };
        let r = validate_assumptions(&dip, Dimension::One, 1.0, 16, 33).unwrap();
        assert!(r.passed());
        assert!((r.kappa_fit - 0.5).abs() < 1e-12);

        let flat = Coefficients::constant(1.0, 0.0);
        let r = validate_assumptions(&flat, Dimension::Two, 1.0, 8, 8).unwrap();
        assert!(r.passed());
        assert_eq!(r.kappa_fit, 1.0);
        assert_eq!(r.holder_exponent_fit, None);

        let step = Coefficients::Step { before: 1.0, after: 2.0, t_jump: 0.37, a0: 0.0 };
        let r = validate_assumptions(&step, Dimension::One, 1.0, 64, 8).unwrap();
        assert!(!r.holder_ok);
        assert!(r.holder_exponent_fit.unwrap().abs() < 0.05);

        let holder = Coefficients::Separable { base: 1.0, space_amplitude: 0.0, time_amplitude: 0.5, mu: 0.6, a0: 0.0 };
        let r = validate_assumptions(&holder, Dimension::One, 1.0, 64, 8).unwrap();
        assert!(r.holder_ok);
        assert!((r.holder_exponent_fit.unwrap() - 0.6).abs() < 0.05);

        assert!(validate_assumptions(&flat, Dimension::One, 1.0, 4, 8).is_err());
    }

    #[test]
    fn triplet_export() {
        let fam = family(1, 4, Coefficients::constant(1.0, 0.0), 1.0);
        let mut buf = Vec::new();
        fam.operator(0.0).unwrap().write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5 + 2 * 4);
        assert!(text.starts_with("0 0 -3.2"));
    }
}
