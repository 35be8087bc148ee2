//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Gram matrix is numerically singular (collinear regressors).
    #[error("singular design: reciprocal condition number {rcond:.3e} is below {threshold:.0e}")]
    SingularDesign { rcond: f64, threshold: f64 },

    /// Too few observations for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Input has no usable variation (ties, zero spacings, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature failed to reach relative tolerance {tol:.1e} within {panels} panels")]
    QuadratureFailure { tol: f64, panels: usize },

    /// No calibrated measure is available for this k.
    #[error("no calibration for k={k}; run `clusterguard calibrate --k {k}` or set CLUSTERGUARD_CALIB_DIR")]
    CalibrationMissing { k: usize },

    /// Monte Carlo calibration could not control size on the null grid.
    #[error("calibration failed: {0}")]
    CalibrationFailure(String),

    /// Argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Filesystem failure while reading or writing a store.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
