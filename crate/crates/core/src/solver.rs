//! Drift-implicit Euler–Maruyama stepping of the boundary-noise equation
//!
//! `U_{k+1} = (I − Δt A_h(t_{k+1}))⁻¹ [U_k + Δt F(U_k) + Δt Λ_h G(U_k) + B(U_k)ΔW¹_k + Λ_h C(U_k)ΔW²_k]`
//!
//! with every coefficient taken at the left endpoint `t_k`. The boundary
//! terms enter through `Λ_h` *before* the resolvent is applied.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryMap;
use crate::error::{check_len, invalid, Error, Result};
use crate::evolution::{Propagator, SteppingLattice};
use crate::noise::{gamma_norm, IncrementStream, NoiseModel, NoiseTarget};
use crate::output::{write_ndjson, Num17};

/// Scalar coefficient functions with known Lipschitz and growth constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    #[default]
    Zero,
    Constant {
        c: f64,
    },
    Affine {
        c0: f64,
        c1: f64,
    },
    Tanh {
        scale: f64,
    },
    Sin {
        scale: f64,
    },
    ClippedLinear {
        c: f64,
        cap: f64,
    },
}

impl Nonlinearity {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Constant { c } => c,
            Nonlinearity::Affine { c0, c1 } => c0 + c1 * x,
            Nonlinearity::Tanh { scale } => (scale * x).tanh(),
            Nonlinearity::Sin { scale } => (scale * x).sin(),
            Nonlinearity::ClippedLinear { c, cap } => c * x.clamp(-cap.abs(), cap.abs()),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Nonlinearity::Zero | Nonlinearity::Constant { .. } => 0.0,
            Nonlinearity::Affine { c1, .. } => c1.abs(),
            Nonlinearity::Tanh { scale } | Nonlinearity::Sin { scale } => scale.abs(),
            Nonlinearity::ClippedLinear { c, .. } => c.abs(),
        }
    }

    /// `(a, b)` with `|f(x)| ≤ a + b|x|`.
    pub fn growth(&self) -> (f64, f64) {
        match *self {
            Nonlinearity::Zero => (0.0, 0.0),
            Nonlinearity::Constant { c } => (c.abs(), 0.0),
            Nonlinearity::Affine { c0, c1 } => (c0.abs(), c1.abs()),
            Nonlinearity::Tanh { .. } | Nonlinearity::Sin { .. } => (1.0, 0.0),
            Nonlinearity::ClippedLinear { c, cap } => ((c * cap).abs(), 0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Nonlinearity::Zero => true,
            Nonlinearity::Constant { c } => c == 0.0,
            Nonlinearity::Affine { c0, c1 } => c0 == 0.0 && c1 == 0.0,
            Nonlinearity::Tanh { scale } | Nonlinearity::Sin { scale } => scale == 0.0,
            Nonlinearity::ClippedLinear { c, cap } => c == 0.0 || cap == 0.0,
        }
    }

    /// True when `f(x) = f(0)` for every `x` (additive noise / pure forcing).
    pub fn is_state_independent(&self) -> bool {
        self.lipschitz() == 0.0
    }
}

/// Interior drift `f`, boundary drift `g`, interior noise multiplier `b`,
/// boundary noise multiplier `c`, all acting pointwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    #[serde(default)]
    pub f: Nonlinearity,
    #[serde(default)]
    pub g: Nonlinearity,
    #[serde(default)]
    pub b: Nonlinearity,
    #[serde(default)]
    pub c: Nonlinearity,
}

/// Everything a path needs, shared read-only across workers.
#[derive(Debug, Clone)]
pub struct SolverContext {
    pub propagator: Arc<Propagator>,
    pub maps: Arc<BoundaryMap>,
    pub interior: Option<Arc<NoiseModel>>,
    pub boundary: Option<Arc<NoiseModel>>,
    pub coefficients: Coefficients,
    pub u0: Vec<f64>,
}

/// Driving increments for one step, already synthesized into fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepIncrements {
    pub interior: Option<Vec<f64>>,
    pub boundary: Option<Vec<f64>>,
}

impl SolverContext {
    pub fn new(
        propagator: Arc<Propagator>,
        maps: Arc<BoundaryMap>,
        interior: Option<Arc<NoiseModel>>,
        boundary: Option<Arc<NoiseModel>>,
        coefficients: Coefficients,
        u0: Vec<f64>,
    ) -> Result<Self> {
        let grid = propagator.family().grid();
        check_len(grid.len(), u0.len())?;
        if let Some(m) = &interior {
            if m.target() != NoiseTarget::Interior {
                return Err(invalid("interior noise model must target the interior"));
            }
        }
        if let Some(m) = &boundary {
            if m.target() != NoiseTarget::Boundary {
                return Err(invalid("boundary noise model must target the boundary"));
            }
        }
        if propagator.is_shifted() {
            return Err(invalid("the stochastic stepper uses the unshifted operator"));
        }
        Ok(Self { propagator, maps, interior, boundary, coefficients, u0 })
    }

    pub fn lattice(&self) -> SteppingLattice {
        self.propagator.lattice()
    }

    fn interior_active(&self) -> bool {
        self.interior.as_ref().is_some_and(|m| !m.is_zero()) && !self.coefficients.b.is_zero()
    }

    fn boundary_active(&self) -> bool {
        self.boundary.as_ref().is_some_and(|m| !m.is_zero()) && !self.coefficients.c.is_zero()
    }

    /// Increments of step `k` on this context's lattice.
    pub fn increments(&self, stream: &IncrementStream, k: usize) -> Result<StepIncrements> {
        let m = self.lattice().steps;
        let field = |model: &NoiseModel| -> Result<Vec<f64>> {
            let db = stream.increments(model.target(), m, k, model.rank())?;
            Ok(model.synthesize(&db))
        };
        Ok(StepIncrements {
            interior: if self.interior_active() { Some(field(self.interior.as_ref().unwrap())?) } else { None },
            boundary: if self.boundary_active() { Some(field(self.boundary.as_ref().unwrap())?) } else { None },
        })
    }

    /// Right-hand side before the implicit solve.
    pub fn explicit_part(&self, k: usize, state: &[f64], inc: &StepIncrements) -> Result<Vec<f64>> {
        let lattice = self.lattice();
        let dt = lattice.dt();
        let t = lattice.time(k);
        let grid = self.propagator.family().grid();
        let co = &self.coefficients;
        let mut rhs = state.to_vec();
        if !co.f.is_zero() {
            rhs.iter_mut().zip(state).for_each(|(r, &u)| *r += dt * co.f.eval(u));
        }
        if let Some(dw) = &inc.interior {
            rhs.iter_mut().zip(state).zip(dw).for_each(|((r, &u), &d)| *r += co.b.eval(u) * d);
        }
        let g_on = !co.g.is_zero();
        if g_on || inc.boundary.is_some() {
            let mut y = vec![0.0; grid.boundary_len()];
            for (b, &node) in grid.boundary_nodes().iter().enumerate() {
                let u = state[node];
                if g_on {
                    y[b] += dt * co.g.eval(u);
                }
                if let Some(dw) = &inc.boundary {
                    y[b] += co.c.eval(u) * dw[b];
                }
            }
            self.maps.forcing(t)?.add_apply(&y, &mut rhs);
        }
        Ok(rhs)
    }

    /// `U_{k+1}` from `U_k`.
    pub fn step(&self, k: usize, state: &[f64], inc: &StepIncrements) -> Result<Vec<f64>> {
        let mut x = self.explicit_part(k, state, inc)?;
        self.propagator.step_in_place(k, &mut x)?;
        Ok(x)
    }
}

/// Which states a trajectory keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    #[default]
    All,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepNorms {
    pub step: usize,
    pub time: f64,
    pub l2: f64,
    pub sup: f64,
    pub boundary_l2: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub lattice: SteppingLattice,
    pub path: u64,
    /// Address of the driving increments: `(seed, path, base step count)`.
    pub stream: IncrementStream,
    /// `(step, state)` pairs; every step for [`Retention::All`].
    pub states: Vec<(usize, Vec<f64>)>,
    pub norms: Vec<StepNorms>,
    pub fingerprint: String,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        &self.states.last().expect("trajectory holds at least one state").1
    }

    /// States at every lattice time, if all were retained.
    pub fn all_states(&self) -> Option<Vec<&[f64]>> {
        (self.states.len() == self.lattice.steps + 1).then(|| self.states.iter().map(|(_, s)| s.as_slice()).collect())
    }

    pub fn write_ndjson<W: Write>(&self, w: &mut W) -> Result<()> {
        #[derive(Serialize)]
        struct Record<'a> {
            fingerprint: &'a str,
            seed: u64,
            path: u64,
            step: usize,
            time: Num17,
            l2: Num17,
            sup: Num17,
            boundary_l2: Num17,
        }
        for n in &self.norms {
            write_ndjson(
                w,
                &Record {
                    fingerprint: &self.fingerprint,
                    seed: self.stream.seed,
                    path: self.path,
                    step: n.step,
                    time: Num17(n.time),
                    l2: Num17(n.l2),
                    sup: Num17(n.sup),
                    boundary_l2: Num17(n.boundary_l2),
                },
            )?;
        }
        Ok(())
    }
}

fn norms_of(ctx: &SolverContext, step: usize, u: &[f64]) -> StepNorms {
    let grid = ctx.propagator.family().grid();
    StepNorms {
        step,
        time: ctx.lattice().time(step),
        l2: grid.norm(u, 2.0),
        sup: grid.norm(u, f64::INFINITY),
        boundary_l2: grid.boundary_norm(&grid.trace_of(u), 2.0),
    }
}

/// Runs one path driven by `stream`, whose base resolution must be a
/// multiple of the lattice step count.
pub fn run_path(
    ctx: &SolverContext,
    stream: IncrementStream,
    retention: Retention,
    fingerprint: &str,
) -> Result<Trajectory> {
    let lattice = ctx.lattice();
    let mut u = ctx.u0.clone();
    let mut states = Vec::with_capacity(if retention == Retention::All { lattice.steps + 1 } else { 1 });
    let mut norms = Vec::with_capacity(lattice.steps + 1);
    norms.push(norms_of(ctx, 0, &u));
    if retention == Retention::All {
        states.push((0, u.clone()));
    }
    for k in 0..lattice.steps {
        let inc = ctx.increments(&stream, k)?;
        u = ctx.step(k, &u, &inc)?;
        let n = norms_of(ctx, k + 1, &u);
        norms.push(n);
        if !(n.l2.is_finite() && n.sup.is_finite()) {
            return Err(Error::NonFinite {
                path: stream.path,
                step: k + 1,
                norms: norms.iter().map(|n| n.l2).collect(),
            });
        }
        if retention == Retention::All {
            states.push((k + 1, u.clone()));
        }
    }
    if retention == Retention::Final {
        states.push((lattice.steps, u));
    }
    Ok(Trajectory { lattice, path: stream.path, stream, states, norms, fingerprint: fingerprint.to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientRole {
    F,
    G,
    B,
    C,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub role: CoefficientRole,
    pub theta: f64,
    pub ratio: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Empirical Lipschitz ratio of a coefficient after smoothing by
/// `(w − A_h(0))^{−θ}`, over random state pairs.
///
/// `B` and `C` are measured in the γ-norm of the noise factor (`p = 2`), and
/// their bound is `L · sup_s (Σ_n λ_n e_n(s)²)^{1/2} · max(1, w^{−θ})`. `G` and
/// `C` act on traces, so their ratio is taken against `‖tr(x − y)‖_∂`.
pub fn lipschitz_audit(
    ctx: &SolverContext,
    role: CoefficientRole,
    theta: f64,
    samples: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    if samples < 100 {
        return Err(invalid(format!("Lipschitz audit needs at least 100 pairs, got {samples}")));
    }
    let fam = ctx.propagator.family();
    let grid = fam.grid();
    let co = ctx.coefficients;
    let (spec, noise) = match role {
        CoefficientRole::F => (co.f, None),
        CoefficientRole::G => (co.g, None),
        CoefficientRole::B => (co.b, ctx.interior.as_deref()),
        CoefficientRole::C => (co.c, ctx.boundary.as_deref()),
    };
    let smoothing = if theta > 0.0 { fam.shift().powf(-theta).max(1.0) } else { 1.0 };
    let noise_sup = noise.map_or(1.0, |m| {
        let cols = m.factor_columns();
        (0..m.carrier_len()).map(|i| cols.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt()).fold(0.0, f64::max)
    });
    let bound = spec.lipschitz() * noise_sup * smoothing;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.len();
    let mut ratio = 0.0_f64;
    for _ in 0..samples {
        let scale = 10f64.powf(rng.random_range(-2.0..1.0));
        let x: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let gap = 10f64.powf(rng.random_range(-3.0..0.0)) * scale;
        let y: Vec<f64> = x.iter().map(|v| v + gap * rng.random_range(-1.0..1.0)).collect();
        let r = match role {
            CoefficientRole::F | CoefficientRole::B => {
                let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| spec.eval(*a) - spec.eval(*b)).collect();
                let den = grid.norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>(), 2.0);
                let num = match (role, noise) {
                    (CoefficientRole::B, Some(m)) => {
                        let cols: Vec<Vec<f64>> = m
                            .factor_columns()
                            .iter()
                            .map(|c| {
                                let v: Vec<f64> = c.iter().zip(&d).map(|(a, b)| a * b).collect();
                                if theta > 0.0 {
                                    fam.fractional_power_values(0.0, -theta, &v)
                                } else {
                                    Ok(v)
                                }
                            })
                            .collect::<Result<_>>()?;
                        gamma_norm(&cols, 2.0, grid.weights())?.value
                    }
                    (CoefficientRole::B, None) => 0.0,
                    _ => {
                        let v = if theta > 0.0 { fam.fractional_power_values(0.0, -theta, &d)? } else { d };
                        grid.norm(&v, 2.0)
                    }
                };
                num / den
            }
            CoefficientRole::G | CoefficientRole::C => {
                let (tx, ty) = (grid.trace_of(&x), grid.trace_of(&y));
                let d: Vec<f64> = tx.iter().zip(&ty).map(|(a, b)| spec.eval(*a) - spec.eval(*b)).collect();
                let den = grid.boundary_norm(&tx.iter().zip(&ty).map(|(a, b)| a - b).collect::<Vec<_>>(), 2.0);
                let num = match (role, noise) {
                    (CoefficientRole::C, Some(m)) => {
                        let cols: Vec<Vec<f64>> =
                            m.factor_columns().iter().map(|c| c.iter().zip(&d).map(|(a, b)| a * b).collect()).collect();
                        gamma_norm(&cols, 2.0, grid.boundary_weights())?.value
                    }
                    (CoefficientRole::C, None) => 0.0,
                    _ => grid.boundary_norm(&d, 2.0),
                };
                num / den
            }
        };
        if r.is_finite() {
            ratio = ratio.max(r);
        }
    }
    Ok(LipschitzReport { role, theta, ratio, bound, passed: ratio <= bound * 1.05 + 1e-12 })
}
