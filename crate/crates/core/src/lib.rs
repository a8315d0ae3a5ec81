//! Numerical laboratory for the stochastic Burgers equation
//!
//! `du = u_xx dt + (u^2/2)_x dt + sqrt(eps) sigma(u) dW` on `[0, T] x [0, 1]`
//! with homogeneous Dirichlet data.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod deviations;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod noise;
pub mod quad;
pub mod rate;
pub mod solvers;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{ht_inner, ht_norm, l2_norm, spacetime_inner, sup_t_l2, Control, Grid, SpaceField, SpaceTimeField};
