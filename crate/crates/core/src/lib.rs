//! Numerical laboratory for the look-ahead traffic model
//! `u_t + (u (1 - u) exp(-K * u))_x = 0`.
//!
//! * [`nonlocal`]: grids, kernels and the nonlocal slow-down factor.
//! * [`threshold`]: the critical threshold curve and the initial-data classifier.
//! * [`characteristics`]: slope/density dynamics along characteristics and
//!   the analytic blow-up bounds.
//! * [`solver`]: first-order finite-volume evolution with diagnostics.
//! * [`scenarios`]: initial-data catalog and the comparison experiments.

pub mod characteristics;
pub mod error;
pub mod nonlocal;
pub mod ode;
pub mod scenarios;
pub mod solver;
pub mod threshold;

pub use error::{Error, Result};
