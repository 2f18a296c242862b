//! Grids, sampled profiles and the discrete look-ahead operator.

mod grid;
mod kernel;

pub use grid::{spatial_derivative, total_mass, GridFunction, GridSpec, DENSITY_TOL};
pub use kernel::{compute_ubar, Kernel, NonlocalField, NEGATIVE_DENSITY_LIMIT};

pub(crate) use kernel::ubar_into;
