//! Discrete weak-form residual of a computed trajectory.
//!
//! For a test function `φ(t)` in the domain of the adjoint,
//!
//! ```text
//! ⟨U(T),φ(T)⟩ − ⟨u0,φ(0)⟩ = Σ_k Δt [⟨U_k, φ'(t_k) + A_h(t_k)φ(t_k)⟩ + ⟨F_k, φ_k⟩ + ⟨Λ_h G_k, φ_k⟩]
//!                          + Σ_k ⟨B_k ΔW¹_k, φ_k⟩ + ⟨Λ_h C_k ΔW²_k, φ_k⟩
//! ```
//!
//! holds for a mild solution; the residual is the gap between both sides.
//! `A_h` is symmetric in the weighted inner product, so `A_h(s)* = A_h(s)`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::IncrementStream;
use crate::output::fmt17;
use crate::solver::{SolverContext, Trajectory};
use crate::spatial::Profile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    Constant,
    /// `1 + slope·t`.
    Linear {
        slope: f64,
    },
    /// `e^{−rate·t}`.
    Exponential {
        rate: f64,
    },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Linear { slope } => 1.0 + slope * t,
            TimeProfile::Exponential { rate } => (-rate * t).exp(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 0.0,
            TimeProfile::Linear { slope } => slope,
            TimeProfile::Exponential { rate } => -rate * (-rate * t).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SpaceProfile {
    /// A smooth profile with zero normal derivative.
    Profile { profile: Profile },
    /// Eigenvector `index` (ascending eigenvalues) of `A_h(0)`; lies in the
    /// discrete domain by construction.
    Eigenvector { index: usize },
}

/// `φ(t, s) = τ(t)·ψ(s)` with analytic `τ'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: u32,
    pub time: TimeProfile,
    pub space: SpaceProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariationalResidual {
    pub phi: u32,
    pub path: u64,
    pub dt: f64,
    pub h: f64,
    /// Boundary terms paired as `⟨Λ_h y, φ⟩`.
    pub residual: f64,
    /// Boundary terms paired as `⟨y, tr φ⟩_∂`.
    pub residual_trace: f64,
    pub lhs: f64,
    /// Largest conormal flux of `ψ` over the lattice.
    pub certificate: f64,
    /// Coefficients vary in time: the boundary condition is only enforced at lattice times.
    pub time_varying: bool,
}

/// Evaluates the residual of `trajectory`, regenerating its increments from `stream`.
pub fn variational_residual(
    ctx: &SolverContext,
    trajectory: &Trajectory,
    phi: &TestFunction,
    stream: &IncrementStream,
) -> Result<VariationalResidual> {
    let lattice = ctx.lattice();
    if trajectory.lattice != lattice {
        return Err(invalid("trajectory and test function live on different lattices"));
    }
    let states =
        trajectory.all_states().ok_or_else(|| invalid("variational residual needs every state of the trajectory"))?;
    let fam = ctx.propagator.family();
    let grid = Arc::clone(fam.grid());
    let maps = &ctx.maps;

    let (psi, certificate) = match phi.space {
        SpaceProfile::Profile { profile } => {
            let times: Vec<f64> = if fam.is_autonomous() { vec![0.0] } else { lattice.times() };
            let cert = times.iter().map(|&t| maps.conormal_flux(t, &profile)).fold(0.0, f64::max);
            (profile.sample(&grid).into_values(), cert)
        }
        SpaceProfile::Eigenvector { index } => {
            if index >= grid.len() {
                return Err(invalid(format!("eigenvector index {index} exceeds {} nodes", grid.len())));
            }
            (fam.spectrum(0.0)?.eigenvector(index), 0.0)
        }
    };
    if certificate > 1e-8 {
        return Err(Error::BoundaryCondition { flux: certificate });
    }
    let trace_psi = grid.trace_of(&psi);
    let co = ctx.coefficients;
    let dt = lattice.dt();
    let m = lattice.steps;

    let lhs = phi.time.value(lattice.time(m)) * grid.inner(states[m], &psi)
        - phi.time.value(0.0) * grid.inner(states[0], &psi);
    let mut rhs_lambda = 0.0;
    let mut rhs_trace = 0.0;
    let mut a_psi_cache: Option<Vec<f64>> = None;
    for k in 0..m {
        let t = lattice.time(k);
        let (tau, dtau) = (phi.time.value(t), phi.time.derivative(t));
        let u = states[k];
        let a_psi = if fam.is_autonomous() {
            a_psi_cache.get_or_insert_with(|| fam.operator(0.0).map(|op| op.apply(&psi)).unwrap_or_default()).clone()
        } else {
            fam.operator(t)?.apply(&psi)
        };
        let mut common = dt * (dtau * grid.inner(u, &psi) + tau * grid.inner(u, &a_psi));
        if !co.f.is_zero() {
            let f: Vec<f64> = u.iter().map(|&x| co.f.eval(x)).collect();
            common += dt * tau * grid.inner(&f, &psi);
        }
        let inc = ctx.increments(stream, k)?;
        if let Some(dw) = &inc.interior {
            let bdw: Vec<f64> = u.iter().zip(dw).map(|(&x, d)| co.b.eval(x) * d).collect();
            common += tau * grid.inner(&bdw, &psi);
        }
        // boundary datum y = Δt G + C ΔW²
        let mut y = vec![0.0; grid.boundary_len()];
        let mut any = false;
        for (b, &node) in grid.boundary_nodes().iter().enumerate() {
            if !co.g.is_zero() {
                y[b] += dt * co.g.eval(u[node]);
                any = true;
            }
            if let Some(dw) = &inc.boundary {
                y[b] += co.c.eval(u[node]) * dw[b];
                any = true;
            }
        }
        let (mut via_lambda, mut via_trace) = (0.0, 0.0);
        if any {
            let mut lam = vec![0.0; grid.len()];
            maps.forcing(t)?.add_apply(&y, &mut lam);
            via_lambda = tau * grid.inner(&lam, &psi);
            via_trace = tau * grid.boundary_inner(&y, &trace_psi);
        }
        rhs_lambda += common + via_lambda;
        rhs_trace += common + via_trace;
    }
    Ok(VariationalResidual {
        phi: phi.id,
        path: trajectory.path,
        dt,
        h: grid.h(),
        residual: (lhs - rhs_lambda).abs(),
        residual_trace: (lhs - rhs_trace).abs(),
        lhs,
        certificate,
        time_varying: !fam.is_autonomous(),
    })
}

/// Writes `path,phi,dt,h,residual,residual_trace` rows.
pub fn write_residual_csv<W: Write>(w: W, rows: &[VariationalResidual]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "phi", "dt", "h", "residual", "residual_trace"])?;
    for r in rows {
        out.write_record([
            r.path.to_string(),
            r.phi.to_string(),
            fmt17(r.dt),
            fmt17(r.h),
            fmt17(r.residual),
            fmt17(r.residual_trace),
        ])?;
    }
    out.flush()?;
    Ok(())
}
