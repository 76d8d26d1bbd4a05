//! Backward-Euler evolution family `P_h(t_k, t_j)` on a uniform time lattice.

use std::sync::Arc;

use serde::Serialize;

use crate::banded::BandLu;
use crate::diagnostics::least_squares;
use crate::elliptic::OperatorFamily;
use crate::error::{check_len, invalid, Result};
use crate::spatial::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteppingLattice {
    pub horizon: f64,
    pub steps: usize,
}

impl SteppingLattice {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(invalid(format!("a lattice needs at least 2 steps, got {steps}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive and finite, got {horizon}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// Factorizations beyond this many stored band entries are rebuilt per step.
const CACHE_BUDGET: usize = 1 << 25;

#[derive(Debug, Clone)]
enum Factors {
    Shared(Arc<BandLu>),
    PerStep(Vec<Arc<BandLu>>),
    OnDemand,
}

/// Applies `(I − Δt·(A_h(t_{k+1}) − σ))⁻¹` step by step, where `σ` is the
/// family's shift when `shifted` and zero otherwise.
#[derive(Debug, Clone)]
pub struct Propagator {
    family: Arc<OperatorFamily>,
    lattice: SteppingLattice,
    shifted: bool,
    factors: Factors,
}

impl Propagator {
    pub fn new(family: Arc<OperatorFamily>, lattice: SteppingLattice, shifted: bool) -> Result<Self> {
        let mut p = Self { family, lattice, shifted, factors: Factors::OnDemand };
        p.factors = if p.family.is_autonomous() {
            Factors::Shared(Arc::new(p.build(0)?))
        } else {
            let n = p.family.grid().len();
            let bw = p.family.operator(0.0)?.bandwidth();
            if n * (3 * bw + 1) * lattice.steps <= CACHE_BUDGET {
                Factors::PerStep((0..lattice.steps).map(|k| p.build(k).map(Arc::new)).collect::<Result<_>>()?)
            } else {
                Factors::OnDemand
            }
        };
        Ok(p)
    }

    fn build(&self, k: usize) -> Result<BandLu> {
        let dt = self.lattice.dt();
        let sigma = if self.shifted { self.family.shift() } else { 0.0 };
        let op = self.family.operator(self.lattice.time(k + 1))?;
        op.band_combination(1.0 + dt * sigma, -dt).factorize(1.0 / dt)
    }

    pub fn family(&self) -> &Arc<OperatorFamily> {
        &self.family
    }

    pub fn lattice(&self) -> SteppingLattice {
        self.lattice
    }

    pub fn is_shifted(&self) -> bool {
        self.shifted
    }

    /// One implicit step from `t_k` to `t_{k+1}`, in place.
    pub fn step_in_place(&self, k: usize, x: &mut [f64]) -> Result<()> {
        if k >= self.lattice.steps {
            return Err(invalid(format!("step {k} outside a lattice of {} steps", self.lattice.steps)));
        }
        match &self.factors {
            Factors::Shared(lu) => lu.solve_in_place(x),
            Factors::PerStep(v) => v[k].solve_in_place(x),
            Factors::OnDemand => self.build(k)?.solve_in_place(x),
        }
        Ok(())
    }

    pub fn propagate_values(&self, s_index: usize, t_index: usize, x: &[f64]) -> Result<Vec<f64>> {
        if s_index > t_index || t_index > self.lattice.steps {
            return Err(invalid(format!(
                "cannot propagate from step {s_index} to step {t_index} on {} steps",
                self.lattice.steps
            )));
        }
        check_len(self.family.grid().len(), x.len())?;
        let mut y = x.to_vec();
        for k in s_index..t_index {
            self.step_in_place(k, &mut y)?;
        }
        Ok(y)
    }

    /// `P_h(t_{t_index}, t_{s_index}) x`.
    pub fn propagate(&self, s_index: usize, t_index: usize, x: &GridFunction) -> Result<GridFunction> {
        let y = self.propagate_values(s_index, t_index, x.values())?;
        GridFunction::new(Arc::clone(self.family.grid()), y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingProbe {
    pub alpha: f64,
    pub beta: f64,
    /// Fitted slope of `log sup‖Px‖_α/‖x‖_β` against `log(t − s)`.
    pub slope: f64,
    /// Smallest `C` with `ratio ≤ C (t − s)^{β−α}` on all sampled pairs.
    pub constant: f64,
    pub worst_ratio: f64,
    pub lags: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Samples `‖P_h(t,s)x‖_{α,t} / ‖x‖_{β,s}` over dyadic lags from `s = 0`
/// (lags under four steps are reported but not fitted),
/// using every eigenvector of `A_h(0)` (up to `max_probes`) plus `random`
/// pseudo-random vectors. Norms are `‖(w − A_h)^η ·‖_{L²}`.
pub fn smoothing_probe(
    prop: &Propagator,
    alpha: f64,
    beta: f64,
    random: usize,
    max_probes: usize,
    seed: u64,
) -> Result<SmoothingProbe> {
    if !(0.0 <= beta && beta <= alpha && alpha <= 1.0) {
        return Err(invalid(format!("smoothing probe needs 0 ≤ β ≤ α ≤ 1, got α = {alpha}, β = {beta}")));
    }
    let fam = prop.family();
    let n = fam.grid().len();
    let lattice = prop.lattice();
    let spec = fam.spectrum(0.0)?;
    let mut probes: Vec<Vec<f64>> = Vec::new();
    let stride = n.div_ceil(max_probes.max(1)).max(1);
    for k in (0..n).step_by(stride) {
        probes.push(spec.eigenvector(k));
    }
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    for _ in 0..random {
        probes.push(
            (0..n)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
                })
                .collect(),
        );
    }
    let denominators: Vec<f64> =
        probes.iter().map(|x| fam.fractional_norm_values(0.0, beta, x, 2.0)).collect::<Result<_>>()?;

    let mut lag_steps = Vec::new();
    let mut l = 1;
    while l <= lattice.steps {
        lag_steps.push(l);
        l *= 2;
    }
    let mut ratios = vec![0.0_f64; lag_steps.len()];
    for (x, &den) in probes.iter().zip(&denominators) {
        let mut y = x.clone();
        let mut k = 0;
        for (slot, &lag) in lag_steps.iter().enumerate() {
            while k < lag {
                prop.step_in_place(k, &mut y)?;
                k += 1;
            }
            let num = fam.fractional_norm_values(lattice.time(lag), alpha, &y, 2.0)?;
            ratios[slot] = ratios[slot].max(num / den);
        }
    }
    let lags: Vec<f64> = lag_steps.iter().map(|&l| lattice.time(l)).collect();
    // lags of one and two steps sit in the implicit scheme's start-up regime
    let fit: Vec<usize> = (0..lags.len()).filter(|&i| lag_steps[i] >= 4).collect();
    if fit.len() < 2 {
        return Err(invalid("smoothing probe needs a lattice of at least 8 steps"));
    }
    let xs: Vec<f64> = fit.iter().map(|&i| lags[i].ln()).collect();
    let ys: Vec<f64> = fit.iter().map(|&i| ratios[i].ln()).collect();
    let (slope, _) = least_squares(&xs, &ys);
    let constant = lags.iter().zip(&ratios).map(|(t, r)| r * t.powf(alpha - beta)).fold(0.0, f64::max);
    let worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(SmoothingProbe { alpha, beta, slope, constant, worst_ratio, lags, ratios })
}
