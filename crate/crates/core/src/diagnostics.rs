//! Pathwise Hölder exponents, regularity caps, and Monte Carlo summaries.
//!
//! Exponents are estimated from the scaling of path increments over dyadic
//! lags `ℓ = 2^j Δt`. The default statistic is the root-mean-square increment
//! `(mean_k ‖u(t_k+ℓ) − u(t_k)‖²)^{1/2}`; the supremum increment is kept as an
//! option but carries an upward bias of `√(log(T/ℓ))` that pulls Brownian
//! estimates noticeably below ½ at desk-scale step counts.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Anchor, Error, Result};
use crate::noise::IncrementStream;
use crate::solver::{run_path, Retention, SolverContext};
use crate::spatial::weighted_norm;

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

fn r_squared(xs: &[f64], ys: &[f64], slope: f64, intercept: f64) -> f64 {
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    }
}

/// Observed convergence order from successive errors under halving.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Median of a sample; NaN for an empty one. Ties are averaged.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IncrementStatistic {
    #[default]
    RootMeanSquare,
    Supremum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderOptions {
    pub statistic: IncrementStatistic,
    /// Number of smallest dyadic lags dropped from the fit.
    pub discard: usize,
    /// Largest lag is `M / 2^tail`.
    pub tail: usize,
}

impl Default for HolderOptions {
    fn default() -> Self {
        Self { statistic: IncrementStatistic::RootMeanSquare, discard: 2, tail: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderEstimate {
    /// `None` when the path is constant and the exponent is undefined.
    pub exponent: Option<f64>,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (usize, usize),
    pub statistic: IncrementStatistic,
    pub log_lags: Vec<f64>,
    pub log_increments: Vec<f64>,
}

impl HolderEstimate {
    pub fn is_constant(&self) -> bool {
        self.exponent.is_none()
    }
}

/// Fits the Hölder exponent of `t_k ↦ u_k` from a distance between samples.
pub fn holder_exponent_with<T>(
    samples: &[T],
    dt: f64,
    distance: impl Fn(&T, &T) -> f64,
    opts: HolderOptions,
) -> Result<HolderEstimate> {
    let m = samples.len().saturating_sub(1);
    if m < 64 {
        return Err(invalid(format!("Hölder estimation needs at least 64 steps, got {m}")));
    }
    if !(dt > 0.0) {
        return Err(invalid("time step must be positive"));
    }
    let levels = (m as f64).log2().floor() as usize;
    let j_min = opts.discard;
    let j_max = levels.saturating_sub(opts.tail).max(j_min + 2);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut all_zero = true;
    for j in j_min..=j_max {
        let lag = 1usize << j;
        if lag > m {
            break;
        }
        let count = m + 1 - lag;
        let stat = match opts.statistic {
            IncrementStatistic::RootMeanSquare => {
                let s: f64 = (0..count).map(|k| distance(&samples[k + lag], &samples[k]).powi(2)).sum();
                (s / count as f64).sqrt()
            }
            IncrementStatistic::Supremum => {
                (0..count).map(|k| distance(&samples[k + lag], &samples[k])).fold(0.0, f64::max)
            }
        };
        if stat > 0.0 && stat.is_finite() {
            all_zero = false;
            xs.push((lag as f64 * dt).ln());
            ys.push(stat.ln());
        }
    }
    if all_zero {
        return Ok(HolderEstimate {
            exponent: None,
            intercept: f64::NAN,
            r_squared: f64::NAN,
            window: (j_min, j_max),
            statistic: opts.statistic,
            log_lags: xs,
            log_increments: ys,
        });
    }
    if xs.len() < 3 {
        return Err(Error::Undefined(format!("only {} usable lag levels (need 3)", xs.len())));
    }
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(HolderEstimate {
        exponent: Some(slope),
        intercept,
        r_squared: r_squared(&xs, &ys, slope, intercept),
        window: (j_min, j_max),
        statistic: opts.statistic,
        log_lags: xs,
        log_increments: ys,
    })
}

/// Hölder exponent of a scalar path.
pub fn holder_exponent(path: &[f64], dt: f64, opts: HolderOptions) -> Result<HolderEstimate> {
    holder_exponent_with(path, dt, |a, b| (a - b).abs(), opts)
}

/// Median exponent over paths; constant paths are skipped. `None` if all were constant.
pub fn median_exponent(estimates: &[HolderEstimate]) -> Option<f64> {
    let v: Vec<f64> = estimates.iter().filter_map(|e| e.exponent).collect();
    if v.is_empty() {
        None
    } else {
        Some(median(&v))
    }
}

/// Terms that contribute to the temporal regularity cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapTerms {
    pub theta_g: Option<f64>,
    pub theta_b: Option<f64>,
    pub theta_c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    BoundaryDrift,
    InteriorNoise,
    BoundaryNoise,
    None,
}

/// `min{1−θ_G, ½−θ_B, ½−θ_C}` over the active terms, with the binding term.
/// With no active term the cap is 1 (the scheme's Lipschitz regularity).
pub fn regularity_cap(terms: CapTerms) -> (f64, Binding) {
    let mut cap = 1.0;
    let mut binding = Binding::None;
    let mut consider = |v: f64, b: Binding| {
        // ties keep the first active term
        if v < cap || (binding == Binding::None && v <= cap) {
            cap = v;
            binding = b;
        }
    };
    if let Some(t) = terms.theta_g {
        consider(1.0 - t, Binding::BoundaryDrift);
    }
    if let Some(t) = terms.theta_b {
        consider(0.5 - t, Binding::InteriorNoise);
    }
    if let Some(t) = terms.theta_c {
        consider(0.5 - t, Binding::BoundaryNoise);
    }
    (cap, binding)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandVerdict {
    pub cap: f64,
    pub binding: Binding,
    pub delta: f64,
    pub median_exponent: Option<f64>,
    pub upper: f64,
    pub lower: Option<f64>,
    pub passed: bool,
    pub constant_path: bool,
}

/// Upper consistency `λ̂ ≤ cap − δ + 0.10`; lower `λ̂ ≥ cap − δ − 0.15` only
/// when a noise term binds.
pub fn band_verdict(terms: CapTerms, delta: f64, median_exponent: Option<f64>) -> Result<BandVerdict> {
    let (cap, binding) = regularity_cap(terms);
    if !(delta >= 0.0 && delta < cap) {
        return Err(Error::rejected(
            Anchor::RegularityCap,
            format!("δ = {delta} must lie in [0, cap) with cap = {cap}"),
        ));
    }
    let upper = cap - delta + 0.10;
    let lower = matches!(binding, Binding::InteriorNoise | Binding::BoundaryNoise).then(|| cap - delta - 0.15);
    let passed = match median_exponent {
        Some(l) => l <= upper && lower.is_none_or(|lo| l >= lo),
        None => false,
    };
    Ok(BandVerdict {
        cap,
        binding,
        delta,
        median_exponent,
        upper,
        lower,
        passed,
        constant_path: median_exponent.is_none(),
    })
}

/// Evaluates `f(path)` for `path ∈ 0..count` on `threads` workers; results
/// come back in path order whatever the scheduling.
pub fn map_paths<T, F>(count: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..count as u64).into_par_iter().map(&f).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub steps: Vec<usize>,
    pub dts: Vec<f64>,
    /// `E‖U_ref(T) − U_level(T)‖_{L²}` per level.
    pub errors: Vec<f64>,
    pub reference_steps: usize,
    pub rate: f64,
    pub paths: usize,
}

/// Strong self-convergence against a much finer reference driven by the same
/// Brownian path. `build(steps)` returns the solver context at a resolution.
pub fn strong_convergence_study(
    build: &(dyn Fn(usize) -> Result<SolverContext> + Sync),
    steps: &[usize],
    reference_steps: usize,
    paths: usize,
    seed: u64,
    threads: usize,
) -> Result<ConvergenceStudy> {
    if paths < 32 {
        return Err(Error::rejected(
            Anchor::ExperimentSetup,
            format!("a strong convergence study needs at least 32 paths, got {paths}"),
        ));
    }
    if steps.len() < 3 {
        return Err(invalid("a strong convergence study needs at least 3 levels"));
    }
    let reference = build(reference_steps)?;
    let levels: Vec<SolverContext> = steps.iter().map(|&m| build(m)).collect::<Result<_>>()?;
    let horizon = reference.lattice().horizon;
    let per_path = map_paths(paths, threads, |path| {
        let stream = IncrementStream::new(seed, path, reference_steps, horizon)?;
        let fine = run_path(&reference, stream, Retention::Final, "")?;
        let grid = reference.propagator.family().grid();
        levels
            .iter()
            .map(|ctx| {
                let coarse = run_path(ctx, stream, Retention::Final, "")?;
                let d: Vec<f64> = fine.final_state().iter().zip(coarse.final_state()).map(|(a, b)| a - b).collect();
                Ok(grid.norm(&d, 2.0))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let errors: Vec<f64> =
        (0..steps.len()).map(|j| per_path.iter().map(|e| e[j]).sum::<f64>() / paths as f64).collect();
    let dts: Vec<f64> = steps.iter().map(|&m| horizon / m as f64).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        dts.iter().zip(&errors).filter(|(_, e)| **e > 0.0).map(|(d, e)| (d.ln(), e.ln())).unzip();
    let rate = if xs.len() >= 2 { least_squares(&xs, &ys).0 } else { f64::NAN };
    Ok(ConvergenceStudy { steps: steps.to_vec(), dts, errors, reference_steps, rate, paths })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandReport {
    pub verdict: BandVerdict,
    pub norm_exponent: f64,
    pub estimates: Vec<HolderEstimate>,
    /// `max_k ‖u(t_k)‖_{L^q}` over all paths, when `q` was configured.
    pub lq_max: Option<f64>,
}

/// Median Hölder exponent of `u − P(·,0)u0` (or `u` itself) in
/// `‖(w − A_h(0))^δ ·‖_{L^p}` over `paths` paths, checked against the cap.
#[allow(clippy::too_many_arguments)]
pub fn regularity_band_check(
    ctx: &SolverContext,
    terms: CapTerms,
    delta: f64,
    p: f64,
    q: Option<f64>,
    subtract_deterministic: bool,
    paths: usize,
    seed: u64,
    threads: usize,
    opts: HolderOptions,
) -> Result<BandReport> {
    let lattice = ctx.lattice();
    if lattice.steps < 64 {
        return Err(Error::rejected(
            Anchor::ExperimentSetup,
            format!("Hölder estimation needs at least 64 steps, got {}", lattice.steps),
        ));
    }
    crate::spatial::check_exponent(p)?;
    // validate δ against the cap before spending any work
    band_verdict(terms, delta, None)?;
    let fam = ctx.propagator.family();
    let grid = fam.grid();
    let deterministic: Option<Vec<Vec<f64>>> = if subtract_deterministic {
        let mut u = ctx.u0.clone();
        let mut all = vec![u.clone()];
        for k in 0..lattice.steps {
            ctx.propagator.step_in_place(k, &mut u)?;
            all.push(u.clone());
        }
        Some(all)
    } else {
        None
    };
    let results = map_paths(paths, threads, |path| {
        let stream = IncrementStream::new(seed, path, lattice.steps, lattice.horizon)?;
        let tr = run_path(ctx, stream, Retention::All, "")?;
        let lq = match q {
            Some(q) => Some(tr.states.iter().map(|(_, s)| weighted_norm(grid.weights(), s, q)).fold(0.0, f64::max)),
            None => None,
        };
        let mut states: Vec<Vec<f64>> = tr.states.into_iter().map(|(_, s)| s).collect();
        if let Some(det) = &deterministic {
            for (s, d) in states.iter_mut().zip(det) {
                s.iter_mut().zip(d).for_each(|(a, b)| *a -= b);
            }
        }
        if delta > 0.0 {
            for s in states.iter_mut() {
                *s = fam.fractional_power_values(0.0, delta, s)?;
            }
        }
        let w = grid.weights();
        let est = holder_exponent_with(
            &states,
            lattice.dt(),
            |a: &Vec<f64>, b: &Vec<f64>| {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                weighted_norm(w, &d, p)
            },
            opts,
        )?;
        Ok((est, lq))
    })?;
    let lq_max = q.map(|_| results.iter().filter_map(|r| r.1).fold(0.0, f64::max));
    let estimates: Vec<HolderEstimate> = results.into_iter().map(|r| r.0).collect();
    let verdict = band_verdict(terms, delta, median_exponent(&estimates))?;
    Ok(BandReport { verdict, norm_exponent: p, estimates, lq_max })
}
