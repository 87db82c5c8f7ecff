pub mod bracing;
pub mod dualize;
pub mod error;
pub mod flexbasis;
pub mod geometry;
pub mod rigidity;
pub mod svg;
pub mod tiling;
pub mod zeromode;

pub use error::{Error, ErrorKind, Result};
pub use geometry::{IndexVector, MultigridSpec, Vec2};
