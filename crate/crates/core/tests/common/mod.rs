#![allow(dead_code)]

use quasirigid::geometry::{pentagrid_preset, tetragrid_preset, MultigridSpec};

/// Regular pentagrid offsets summing to zero. The symmetric choice
/// (0.2, 0.2, 0.2, 0.2, −0.8) has exact triple points and is refused.
pub const PENTA: [f64; 5] = [0.1, 0.15, 0.2, 0.25, -0.7];
pub const PENTA_ALT: [f64; 5] = [0.31, -0.12, 0.07, 0.22, -0.48];
pub const TETRA: [f64; 4] = [0.11, 0.23, 0.36, 0.05];

/// Smallest window at which both working patches close without escaping.
pub const WINDOW: f64 = 6.0;

pub fn pentagrid() -> MultigridSpec {
    pentagrid_preset(PENTA).spec
}

pub fn tetragrid() -> MultigridSpec {
    tetragrid_preset(TETRA)
}
