//! Simulation and verification toolkit for non-autonomous semilinear parabolic
//! SPDEs driven by interior noise and Neumann boundary noise.
//!
//! The pipeline is: a [`spatial::Grid`] carries an [`elliptic::OperatorFamily`]
//! `A_h(t)` with conormal boundary conditions; [`boundary::BoundaryMap`] turns
//! boundary data into interior forcing through the Neumann map; the
//! [`solver`] steps the equation with drift-implicit Euler–Maruyama using
//! increments from [`noise`]; [`variational`] and [`diagnostics`] check the
//! results; [`config`] and [`experiment`] wire it all to files.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod boundary;
pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod noise;
pub mod output;
pub mod solver;
pub mod spatial;
pub mod variational;

pub use error::{Anchor, Error, Result, Violation};
pub use spatial::{BoundaryDatum, Dimension, Grid, GridFunction, Profile};
