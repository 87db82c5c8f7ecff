use thiserror::Error;

/// Coarse failure category, used by the command line to pick an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or out-of-contract input.
    Input,
    /// The geometry or combinatorics did not satisfy a structural requirement.
    Geometry,
    /// A numerical rank decision could not be certified.
    IllConditioned,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid multigrid: {0}")]
    InvalidSpec(String),

    #[error("multigrid is not regular in the window: {0}")]
    Irregular(String),

    #[error("point lies on line {line} of grid {grid}")]
    OnLine { grid: usize, line: i64 },

    #[error("window radius {0} contains no grid intersection")]
    EmptyWindow(f64),

    #[error("invalid tiling: {0}")]
    InvalidTiling(String),

    #[error("tile {tile}: {reason}")]
    BadTile { tile: usize, reason: String },

    #[error("patch closure reached the edge of the ambient tiling; use a larger window")]
    ClosureEscaped,

    #[error("invalid patch: {0}")]
    InvalidPatch(String),

    #[error("invalid framework: {0}")]
    InvalidFramework(String),

    #[error("ill-conditioned rank decision: spectral gap ratio {gap_ratio:.3e} is below {required:.0e}")]
    IllConditioned { gap_ratio: f64, required: f64 },

    #[error("velocity field is not an infinitesimal flex: {0}")]
    NotAFlex(String),

    #[error("tiling carries no multigrid labels: {0}")]
    MissingLabels(String),

    #[error("invalid bracing pattern: {0}")]
    InvalidPattern(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidSpec(_)
            | Error::OnLine { .. }
            | Error::InvalidPattern(_)
            | Error::MissingLabels(_)
            | Error::Json(_) => ErrorKind::Input,
            Error::IllConditioned { .. } => ErrorKind::IllConditioned,
            _ => ErrorKind::Geometry,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
