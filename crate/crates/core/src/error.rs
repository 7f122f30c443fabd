use thiserror::Error;

/// Errors raised across the simulator and the estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A frame-geometry inequality does not hold; the message names it.
    #[error("layout does not fit: {0}")]
    LayoutOverflow(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("path delay {delay_bins:.3} bins exceeds the cyclic prefix ({cp_bins} bins)")]
    CpViolation { delay_bins: f64, cp_bins: usize },

    #[error("degenerate signal subspace: eigenvalue ratio {ratio:.3e} below {threshold:.1e}")]
    DegenerateSubspace { ratio: f64, threshold: f64 },

    #[error("near-collinear angles: steering matrix condition number {cond:.3e}")]
    NearCollinearAngles { cond: f64 },

    #[error("support of size {support} exceeds the {columns} dictionary columns")]
    SupportOverflow { support: usize, columns: usize },

    #[error("no path found: zero peak magnitude")]
    NoPath,

    #[error("true channel has zero norm")]
    ZeroNorm,

    #[error("frame of {cells} cells exceeds the desk-scale detector limit of {limit} cells")]
    DeskScale { cells: usize, limit: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
