//! Uniform vertex-centred grids on the interval `(0,1)` and the square `(0,1)²`.
//!
//! Nodes cover the closure of the domain. Volume weights are the tensor
//! trapezoidal weights (half weight on faces, quarter weight on corners),
//! so they sum to the domain measure exactly. Boundary nodes are listed once
//! each, counter-clockwise starting from the origin; in 2D a corner carries
//! half of the surface weight of each adjacent edge.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::output::fmt17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn from_usize(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Dimension::One),
            2 => Ok(Dimension::Two),
            _ => Err(invalid(format!("dimension must be 1 or 2, got {d}"))),
        }
    }

    pub fn as_usize(self) -> usize {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: Dimension,
    n: usize,
    h: f64,
    coords: Vec<[f64; 2]>,
    weights: Vec<f64>,
    boundary: Vec<usize>,
    boundary_weights: Vec<f64>,
    /// Outward unit normals per boundary node; corners carry both edge normals.
    normals: Vec<Vec<[f64; 2]>>,
}

impl Grid {
    /// Builds the grid with `n_per_axis` cells per axis (`n_per_axis ≥ 4`).
    pub fn new(dim: usize, n_per_axis: usize) -> Result<Self> {
        let dim = Dimension::from_usize(dim)?;
        if n_per_axis < 4 {
            return Err(invalid(format!("n_per_axis must be at least 4, got {n_per_axis}")));
        }
        let n = n_per_axis;
        let h = 1.0 / n as f64;
        let axis_weight = |i: usize| if i == 0 || i == n { 0.5 * h } else { h };
        let grid = match dim {
            Dimension::One => {
                let coords = (0..=n).map(|i| [i as f64 * h, 0.0]).collect();
                let weights = (0..=n).map(axis_weight).collect();
                Grid {
                    dim,
                    n,
                    h,
                    coords,
                    weights,
                    boundary: vec![0, n],
                    boundary_weights: vec![1.0, 1.0],
                    normals: vec![vec![[-1.0, 0.0]], vec![[1.0, 0.0]]],
                }
            }
            Dimension::Two => {
                let m = n + 1;
                let mut coords = Vec::with_capacity(m * m);
                let mut weights = Vec::with_capacity(m * m);
                for j in 0..m {
                    for i in 0..m {
                        coords.push([i as f64 * h, j as f64 * h]);
                        weights.push(axis_weight(i) * axis_weight(j));
                    }
                }
                let idx = |i: usize, j: usize| j * m + i;
                let mut boundary = Vec::with_capacity(4 * n);
                let mut normals = Vec::with_capacity(4 * n);
                let bottom = [0.0, -1.0];
                let right = [1.0, 0.0];
                let top = [0.0, 1.0];
                let left = [-1.0, 0.0];
                for i in 0..n {
                    boundary.push(idx(i, 0));
                    normals.push(if i == 0 { vec![left, bottom] } else { vec![bottom] });
                }
                for j in 0..n {
                    boundary.push(idx(n, j));
                    normals.push(if j == 0 { vec![bottom, right] } else { vec![right] });
                }
                for i in (1..=n).rev() {
                    boundary.push(idx(i, n));
                    normals.push(if i == n { vec![right, top] } else { vec![top] });
                }
                for j in (1..=n).rev() {
                    boundary.push(idx(0, j));
                    normals.push(if j == n { vec![top, left] } else { vec![left] });
                }
                let boundary_weights = vec![h; 4 * n];
                Grid { dim, n, h, coords, weights, boundary, boundary_weights, normals }
            }
        };
        Ok(grid)
    }

    pub fn dimension(&self) -> Dimension {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    pub fn boundary_normals(&self, b: usize) -> &[[f64; 2]] {
        &self.normals[b]
    }

    /// Arc-length position of each boundary node (`2D`: `k·h` along the perimeter).
    pub fn boundary_arclength(&self) -> Vec<f64> {
        match self.dim {
            Dimension::One => vec![0.0, 1.0],
            Dimension::Two => (0..self.boundary.len()).map(|k| k as f64 * self.h).collect(),
        }
    }

    /// Index of node `(i, j)`; `j` is ignored in 1D.
    pub fn index(&self, i: usize, j: usize) -> usize {
        match self.dim {
            Dimension::One => i,
            Dimension::Two => j * (self.n + 1) + i,
        }
    }

    pub fn measure(&self) -> f64 {
        1.0
    }

    pub fn boundary_measure(&self) -> f64 {
        match self.dim {
            Dimension::One => 2.0,
            Dimension::Two => 4.0,
        }
    }

    /// Weighted inner product `Σ w_i a_i b_i`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    /// Boundary-weighted inner product of two boundary vectors.
    pub fn boundary_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.boundary_weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    /// Weighted discrete `L^p` norm of nodal values; `p = ∞` gives the max norm.
    pub fn norm(&self, values: &[f64], p: f64) -> f64 {
        weighted_norm(&self.weights, values, p)
    }

    pub fn boundary_norm(&self, values: &[f64], p: f64) -> f64 {
        weighted_norm(&self.boundary_weights, values, p)
    }

    /// Restriction of nodal values to the boundary nodes.
    pub fn trace_of(&self, values: &[f64]) -> Vec<f64> {
        self.boundary.iter().map(|&i| values[i]).collect()
    }

    pub fn sample(self: &Arc<Self>, f: impl Fn([f64; 2]) -> f64) -> GridFunction {
        let values = self.coords.iter().map(|&x| f(x)).collect();
        GridFunction { grid: Arc::clone(self), values }
    }
}

pub(crate) fn weighted_norm(weights: &[f64], values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    } else if p == 2.0 {
        weights.iter().zip(values).map(|(w, v)| w * v * v).sum::<f64>().sqrt()
    } else {
        weights.iter().zip(values).map(|(w, v)| w * v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Validates an integrability exponent.
pub fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        Err(invalid(format!("norm exponent must lie in [1, ∞], got {p}")))
    } else {
        Ok(())
    }
}

/// Nodal values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        check_len(grid.len(), values.len())?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        check_exponent(p)?;
        if self.values.is_empty() {
            return Err(invalid("norm of an empty grid function"));
        }
        Ok(self.grid.norm(&self.values, p))
    }

    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        check_len(self.values.len(), other.values.len())?;
        Ok(self.grid.inner(&self.values, &other.values))
    }

    /// Values at the boundary nodes in canonical order.
    pub fn trace(&self) -> BoundaryDatum {
        BoundaryDatum { grid: Arc::clone(&self.grid), values: self.grid.trace_of(&self.values) }
    }

    /// Writes `s1[,s2],value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        match self.grid.dim {
            Dimension::One => wtr.write_record(["s1", "value"])?,
            Dimension::Two => wtr.write_record(["s1", "s2", "value"])?,
        }
        for (x, v) in self.grid.coords.iter().zip(&self.values) {
            match self.grid.dim {
                Dimension::One => wtr.write_record([fmt17(x[0]), fmt17(*v)])?,
                Dimension::Two => wtr.write_record([fmt17(x[0]), fmt17(x[1]), fmt17(*v)])?,
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads values written by [`GridFunction::write_csv`] onto `grid`.
    pub fn read_csv<R: Read>(grid: Arc<Grid>, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let col = grid.dim.as_usize();
        let mut values = Vec::with_capacity(grid.len());
        for rec in rdr.records() {
            let rec = rec?;
            let v = rec
                .get(col)
                .ok_or_else(|| invalid("missing value column"))?
                .trim()
                .parse::<f64>()
                .map_err(|e| invalid(format!("bad value: {e}")))?;
            values.push(v);
        }
        Self::new(grid, values)
    }
}

/// Nodal values on the boundary nodes of a grid (conormal flux data).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDatum {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl BoundaryDatum {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        check_len(grid.boundary_len(), values.len())?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.boundary_len()];
        Self { grid, values }
    }

    /// Samples `f` at the boundary nodes. On the square, corners receive the
    /// average of the limits from the two adjacent edges, passed as `edge_value`.
    pub fn from_edges(grid: Arc<Grid>, edge_value: impl Fn(usize, [f64; 2]) -> f64) -> Self {
        let values = grid
            .boundary_nodes()
            .iter()
            .enumerate()
            .map(|(b, &i)| {
                let x = grid.coords()[i];
                match grid.dimension() {
                    Dimension::One => edge_value(b, x),
                    Dimension::Two => {
                        let edges = corner_edges(&grid, x);
                        edges.iter().map(|&e| edge_value(e, x)).sum::<f64>() / edges.len() as f64
                    }
                }
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: Arc::clone(&self.grid), values: self.values.iter().map(|v| c * v).collect() }
    }

    /// Reads `index,value` rows; unlisted nodes are zero.
    pub fn read_csv<R: Read>(grid: Arc<Grid>, r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut values = vec![0.0; grid.boundary_len()];
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<&str> {
                rec.get(k).map(str::trim).ok_or_else(|| invalid("boundary CSV rows need index,value"))
            };
            let idx: usize = parse(0)?.parse().map_err(|e| invalid(format!("bad index: {e}")))?;
            let v: f64 = parse(1)?.parse().map_err(|e| invalid(format!("bad value: {e}")))?;
            let slot =
                values.get_mut(idx).ok_or(Error::ShapeMismatch { expected: grid.boundary_len(), found: idx + 1 })?;
            *slot = v;
        }
        Ok(Self { grid, values })
    }
}

/// Edge ids (0 bottom, 1 right, 2 top, 3 left) that contain `x`.
fn corner_edges(grid: &Grid, x: [f64; 2]) -> Vec<usize> {
    let tol = 0.25 * grid.h();
    let mut e = Vec::with_capacity(2);
    if x[1] < tol {
        e.push(0);
    }
    if x[0] > 1.0 - tol {
        e.push(1);
    }
    if x[1] > 1.0 - tol {
        e.push(2);
    }
    if x[0] < tol {
        e.push(3);
    }
    e
}

/// Smooth functions on the closed domain with analytic gradients, used as
/// test functions and initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `Π_i cos(k_i π s_i)`; `k[1]` is ignored in 1D.
    Cosine {
        k: [u32; 2],
    },
    /// `3s₁² − 2s₁³`, flat at both ends.
    SmoothStep,
    /// `s₁`.
    Linear,
}

impl Profile {
    pub fn value(&self, x: [f64; 2], dim: Dimension) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Profile::Constant { value } => value,
            Profile::Cosine { k } => {
                let c1 = (k[0] as f64 * PI * x[0]).cos();
                match dim {
                    Dimension::One => c1,
                    Dimension::Two => c1 * (k[1] as f64 * PI * x[1]).cos(),
                }
            }
            Profile::SmoothStep => x[0] * x[0] * (3.0 - 2.0 * x[0]),
            Profile::Linear => x[0],
        }
    }

    pub fn gradient(&self, x: [f64; 2], dim: Dimension) -> [f64; 2] {
        use std::f64::consts::PI;
        match *self {
            Profile::Constant { .. } => [0.0, 0.0],
            Profile::Cosine { k } => {
                let (k1, k2) = (k[0] as f64 * PI, k[1] as f64 * PI);
                match dim {
                    Dimension::One => [-k1 * (k1 * x[0]).sin(), 0.0],
                    Dimension::Two => {
                        [-k1 * (k1 * x[0]).sin() * (k2 * x[1]).cos(), -k2 * (k1 * x[0]).cos() * (k2 * x[1]).sin()]
                    }
                }
            }
            Profile::SmoothStep => [6.0 * x[0] * (1.0 - x[0]), 0.0],
            Profile::Linear => [1.0, 0.0],
        }
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> GridFunction {
        let dim = grid.dimension();
        grid.sample(|x| self.value(x, dim))
    }

    /// Largest `|∇φ·n|` over boundary nodes (and both normals at corners).
    pub fn max_normal_derivative(&self, grid: &Grid) -> f64 {
        let dim = grid.dimension();
        let mut m = 0.0_f64;
        for (b, &i) in grid.boundary_nodes().iter().enumerate() {
            let g = self.gradient(grid.coords()[i], dim);
            for nrm in grid.boundary_normals(b) {
                m = m.max((g[0] * nrm[0] + g[1] * nrm[1]).abs());
            }
        }
        m
    }
}
