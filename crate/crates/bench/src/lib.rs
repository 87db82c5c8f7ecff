//! Fixtures shared by the benchmarks.

use quasirigid::geometry::{pentagrid_preset, tetragrid_preset, MultigridSpec};

pub const PENTAGRID_OFFSETS: [f64; 5] = [0.1, 0.15, 0.2, 0.25, -0.7];
pub const TETRAGRID_OFFSETS: [f64; 4] = [0.11, 0.23, 0.36, 0.05];

pub fn pentagrid() -> MultigridSpec {
    pentagrid_preset(PENTAGRID_OFFSETS).spec
}

pub fn tetragrid() -> MultigridSpec {
    tetragrid_preset(TETRAGRID_OFFSETS)
}
