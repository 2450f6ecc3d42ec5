//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a mathematical precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A frequency grid was empty or not strictly increasing.
    #[error("invalid frequency grid: {0}")]
    Grid(String),

    /// Component synthesis could not be satisfied from the given catalogs.
    #[error("synthesis error: {0}")]
    Synthesis(String),

    /// A catalog or mesh file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Mesh validation failed; the diagnostics list the offending segments.
    #[error("mesh validation failed:\n{0}")]
    MeshInvalid(String),

    /// A lumped load was attached to the feed basis.
    #[error("load on segment {segment} coincides with the feed; feed and load must be distinct")]
    LoadOnFeed { segment: usize },

    /// The system matrix is singular or numerically unusable.
    #[error("ill-conditioned impedance matrix (one-norm condition estimate {condition:.3e} > {limit:.1e})")]
    IllConditioned { condition: f64, limit: f64 },

    /// A frequency sweep failed at a specific point.
    #[error("sweep failed at {freq_hz} Hz: {source}")]
    SweepPoint {
        freq_hz: f64,
        #[source]
        source: Box<Error>,
    },

    /// A result was combined with a mesh it was not produced from.
    #[error("mesh/result mismatch: {0}")]
    MeshMismatch(String),

    /// The requested operation needs exactly one trap load on the mesh.
    #[error("mesh carries {found} trap loads; exactly one is required")]
    TrapLoadCount { found: usize },

    /// Spherical integration was requested on a grid not covering the sphere.
    #[error("far-field grid does not cover the full sphere")]
    PartialSphere,

    /// Radiated power exceeded input power beyond the numerical budget.
    #[error("power balance violated: radiated {p_rad:.6e} W exceeds input {p_in:.6e} W by more than 2%")]
    PowerBalance { p_rad: f64, p_in: f64 },

    /// A tolerance report was used before all corners completed.
    #[error("tolerance report incomplete: {0}")]
    IncompleteReport(String),

    /// A design put under comparison has no nominal dip inside its band.
    #[error("design not tuned: {0}")]
    Untuned(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
