//! The discrete Neumann map `N_h(t)` and boundary forcing `Λ_h(t) = (w − A_h(t)) N_h(t)`.
//!
//! `N_h(t)y` solves `(A_h(t) − w)x = 0` in the interior with conormal flux `y`
//! injected at the ghost-flux slot of each boundary node (weighted by the
//! surface quadrature). Applying the homogeneous stencil to `N_h(t)y` then
//! leaves only the injected flux, which is the discrete counterpart of a
//! boundary distribution living in the extrapolation space.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::banded::BandLu;
use crate::elliptic::OperatorFamily;
use crate::error::{check_len, Anchor, Error, Result};
use crate::spatial::{BoundaryDatum, GridFunction, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    Neumann,
    Dirichlet,
}

/// Rejects boundary conditions the Neumann-map construction cannot handle.
pub fn check_boundary_kind(kind: BoundaryKind) -> Result<()> {
    match kind {
        BoundaryKind::Neumann => Ok(()),
        BoundaryKind::Dirichlet => Err(Error::rejected(
            Anchor::DirichletExcluded,
            "Dirichlet boundary noise is not supported: the Dirichlet map does not map into the \
             extrapolation space needed for a solution in L^p, since that would require α − 1/p < 0 \
             while α > 1",
        )),
    }
}

/// Sparse columns of `Λ_h(t)`, one per boundary node.
#[derive(Debug, Clone)]
pub struct ForcingColumns {
    columns: Vec<Vec<(usize, f64)>>,
}

impl ForcingColumns {
    /// `out += Λ_h y`.
    pub fn add_apply(&self, y: &[f64], out: &mut [f64]) {
        for (col, &yb) in self.columns.iter().zip(y) {
            if yb != 0.0 {
                for &(i, v) in col {
                    out[i] += v * yb;
                }
            }
        }
    }

    pub fn columns(&self) -> &[Vec<(usize, f64)>] {
        &self.columns
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryMap {
    family: Arc<OperatorFamily>,
    factors: BTreeMap<u64, Arc<BandLu>>,
    /// Forcing columns per prepared time, built on first use.
    forcing: BTreeMap<u64, OnceLock<Arc<ForcingColumns>>>,
}

impl BoundaryMap {
    pub fn new(family: Arc<OperatorFamily>, kind: BoundaryKind) -> Result<Self> {
        check_boundary_kind(kind)?;
        Ok(Self { family, factors: BTreeMap::new(), forcing: BTreeMap::new() })
    }

    pub fn family(&self) -> &Arc<OperatorFamily> {
        &self.family
    }

    fn canonical(&self, t: f64) -> f64 {
        if self.family.is_autonomous() {
            0.0
        } else {
            t
        }
    }

    /// Factorizes the elliptic problem and reserves the forcing columns at
    /// each time, checking the solve residual on a probe datum.
    pub fn prepare(&mut self, times: &[f64]) -> Result<()> {
        for &t in times {
            let t = self.canonical(t);
            if self.factors.contains_key(&t.to_bits()) {
                continue;
            }
            let lu = Arc::new(self.family.resolvent(t, self.family.shift())?);
            let probe = vec![1.0; self.family.grid().boundary_len()];
            let x = self.solve_with(&lu, &probe);
            let residual = self.flux_residual(t, &x, &probe)?;
            if residual > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "Neumann solve residual {residual:e} at t = {t} exceeds 1e-10"
                )));
            }
            self.factors.insert(t.to_bits(), Arc::clone(&lu));
            self.forcing.insert(t.to_bits(), OnceLock::new());
        }
        Ok(())
    }

    fn factor(&self, t: f64) -> Result<Arc<BandLu>> {
        let t = self.canonical(t);
        match self.factors.get(&t.to_bits()) {
            Some(lu) => Ok(Arc::clone(lu)),
            None => Ok(Arc::new(self.family.resolvent(t, self.family.shift())?)),
        }
    }

    /// `W^{-1} E y`: boundary flux times surface weight, per unit volume.
    fn injected(&self, y: &[f64]) -> Vec<f64> {
        let grid = self.family.grid();
        let mut rhs = vec![0.0; grid.len()];
        let w = grid.weights();
        for ((&node, &bw), &yb) in grid.boundary_nodes().iter().zip(grid.boundary_weights()).zip(y) {
            rhs[node] += bw * yb / w[node];
        }
        rhs
    }

    fn solve_with(&self, lu: &BandLu, y: &[f64]) -> Vec<f64> {
        lu.solve(&self.injected(y))
    }

    /// Relative residual of `(w − A_h)x = W^{-1}Ey`.
    fn flux_residual(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        let op = self.family.operator(t)?;
        let w = self.family.shift();
        let ax = op.apply(x);
        let rhs = self.injected(y);
        let grid = self.family.grid();
        let r: Vec<f64> = x.iter().zip(&ax).zip(&rhs).map(|((xi, a), b)| w * xi - a - b).collect();
        let scale = grid.norm(&rhs, 2.0).max(f64::MIN_POSITIVE);
        Ok(grid.norm(&r, 2.0) / scale)
    }

    pub fn neumann_values(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.family.grid().boundary_len(), y.len())?;
        let lu = self.factor(t)?;
        Ok(self.solve_with(&lu, y))
    }

    /// `N_h(t) y`.
    pub fn neumann_solve(&self, t: f64, y: &BoundaryDatum) -> Result<GridFunction> {
        let x = self.neumann_values(t, y.values())?;
        GridFunction::new(Arc::clone(self.family.grid()), x)
    }

    /// `Λ_h(t) y = (w − A_h(t)) N_h(t) y`, evaluated by composition.
    pub fn lambda_values(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let x = self.neumann_values(t, y)?;
        let ax = self.family.operator(t)?.apply(&x);
        let w = self.family.shift();
        Ok(x.iter().zip(&ax).map(|(xi, a)| w * xi - a).collect())
    }

    pub fn lambda_apply(&self, t: f64, y: &BoundaryDatum) -> Result<GridFunction> {
        let v = self.lambda_values(t, y.values())?;
        GridFunction::new(Arc::clone(self.family.grid()), v)
    }

    fn build_forcing(&self, t: f64, lu: Option<&BandLu>) -> Result<ForcingColumns> {
        let grid = self.family.grid();
        let nb = grid.boundary_len();
        let op = self.family.operator(t)?;
        let w = self.family.shift();
        let owned;
        let lu = match lu {
            Some(lu) => lu,
            None => {
                owned = self.factor(t)?;
                owned.as_ref()
            }
        };
        let mut columns = Vec::with_capacity(nb);
        let mut e = vec![0.0; nb];
        for b in 0..nb {
            e[b] = 1.0;
            let x = self.solve_with(lu, &e);
            let ax = op.apply(&x);
            let col: Vec<f64> = x.iter().zip(&ax).map(|(xi, a)| w * xi - a).collect();
            let peak = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            columns.push(col.into_iter().enumerate().filter(|&(_, v)| v.abs() > 1e-13 * peak).collect());
            e[b] = 0.0;
        }
        Ok(ForcingColumns { columns })
    }

    /// Sparse columns of `Λ_h(t)`, cached on prepared times.
    pub fn forcing(&self, t: f64) -> Result<Arc<ForcingColumns>> {
        let key = self.canonical(t).to_bits();
        match self.forcing.get(&key) {
            Some(cell) => match cell.get() {
                Some(f) => Ok(Arc::clone(f)),
                None => {
                    let lu = self.factor(t)?;
                    let built = Arc::new(self.build_forcing(self.canonical(t), Some(&lu))?);
                    Ok(Arc::clone(cell.get_or_init(|| built)))
                }
            },
            None => Ok(Arc::new(self.build_forcing(self.canonical(t), None)?)),
        }
    }

    /// `|⟨Λ_h(t) y, φ⟩_w − ⟨y, tr φ⟩_∂|` for a test profile `φ` with zero
    /// conormal derivative.
    pub fn trace_adjoint_residual(&self, t: f64, y: &BoundaryDatum, phi: &Profile) -> Result<f64> {
        let grid = self.family.grid();
        let flux = self.conormal_flux(t, phi);
        if flux > 1e-8 {
            return Err(Error::BoundaryCondition { flux });
        }
        let values = phi.sample(grid);
        self.trace_adjoint_residual_values(t, y.values(), values.values())
    }

    /// Residual for nodal `φ` already known to satisfy the homogeneous condition.
    pub fn trace_adjoint_residual_values(&self, t: f64, y: &[f64], phi: &[f64]) -> Result<f64> {
        let grid = self.family.grid();
        check_len(grid.len(), phi.len())?;
        let lam = self.lambda_values(t, y)?;
        let lhs = grid.inner(&lam, phi);
        let rhs = grid.boundary_inner(y, &grid.trace_of(phi));
        Ok((lhs - rhs).abs())
    }

    /// `max |a(t,σ)∇φ·n|` over the boundary nodes.
    pub fn conormal_flux(&self, t: f64, phi: &Profile) -> f64 {
        let grid = self.family.grid();
        let dim = grid.dimension();
        let coeffs = self.family.coefficients();
        let mut m = 0.0_f64;
        for (b, &i) in grid.boundary_nodes().iter().enumerate() {
            let x = grid.coords()[i];
            let g = phi.gradient(x, dim);
            let a = coeffs.diffusion(t, x);
            let flux = [a[0] * g[0] + a[1] * g[1], a[1] * g[0] + a[2] * g[1]];
            for nrm in grid.boundary_normals(b) {
                m = m.max((flux[0] * nrm[0] + flux[1] * nrm[1]).abs());
            }
        }
        m
    }

    /// `(w − A_h(t))^{-θ} Λ_h(t) y` for `θ ∈ [1 − α/2, 1]`.
    pub fn smoothed_lambda_apply(&self, t: f64, theta: f64, alpha: f64, y: &BoundaryDatum) -> Result<GridFunction> {
        let lo = 1.0 - alpha / 2.0;
        if !(theta >= lo && theta <= 1.0) {
            return Err(Error::rejected(
                Anchor::SmoothedForcingRange,
                format!("θ = {theta} must lie in [1 − α/2, 1] = [{lo}, 1] for α = {alpha}"),
            ));
        }
        let lam = self.lambda_values(t, y.values())?;
        let v = self.family.fractional_power_values(t, -theta, &lam)?;
        GridFunction::new(Arc::clone(self.family.grid()), v)
    }

    /// Operator norm of `(w − A_h(t))^{-θ} Λ_h(t)` from the surface-weighted
    /// boundary space into `L²`.
    pub fn smoothed_lambda_norm(&self, t: f64, theta: f64, alpha: f64) -> Result<f64> {
        let grid = self.family.grid();
        let nb = grid.boundary_len();
        let mut cols = Vec::with_capacity(nb);
        for b in 0..nb {
            let mut e = vec![0.0; nb];
            // unit vector in the surface-weighted norm
            e[b] = 1.0 / grid.boundary_weights()[b].sqrt();
            let y = BoundaryDatum::new(Arc::clone(grid), e)?;
            cols.push(self.smoothed_lambda_apply(t, theta, alpha, &y)?.into_values());
        }
        // largest singular value via the nb × nb Gram matrix
        let gram = nalgebra::DMatrix::from_fn(nb, nb, |i, j| grid.inner(&cols[i], &cols[j]));
        let top = nalgebra::SymmetricEigen::new(gram).eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v));
        Ok(top.sqrt())
    }
}
