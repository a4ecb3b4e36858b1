//! Shared fixtures for the benchmarks.

use heatlab_core::env::{generate_environment, EnvironmentField, SpeedMode};
use heatlab_core::suites::ensemble_spec;

/// A two-dimensional ensemble member with `cells` cells per side.
pub fn field(cells: usize, seed: u64) -> EnvironmentField {
    let spec = ensemble_spec(2, cells, cells as f64, 6.0, SpeedMode::Lambda, seed);
    generate_environment(&spec).expect("benchmark spec is valid")
}
