//! Numerical laboratory for heat kernels of `(1/θ) ∇·(a ∇ ·)` in degenerate
//! random environments: environment generation, finite-volume generators,
//! Crank–Nicolson kernels, intrinsic metrics and bound verification.

pub mod bounds;
pub mod env;
pub mod error;
pub mod green;
pub mod grid;
pub mod heat;
pub mod io;
pub mod linalg;
pub mod metric;
pub mod operator;
pub mod rng;
pub mod stochastics;
pub mod suites;

pub use error::{Error, Result};
pub use grid::{Grid, Point};

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
