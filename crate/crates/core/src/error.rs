use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The coupling matrix has an eigenvalue with non-positive real part, so
    /// the fixed-topology Lyapunov certificate does not exist.
    #[error("coupling matrix is not positive stable (min real part {min_real_part:.3e})")]
    NotPositiveStable { min_real_part: f64 },

    /// Some H + Hᵀ in the switching set is not positive definite.
    #[error("switching certificate unavailable: min eigenvalue of H+Hᵀ is {lambda_bar:.6}")]
    SwitchingCertificateUnavailable { lambda_bar: f64 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("time {t} outside schedule [{start}, {end})")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("state diverged at t = {t}")]
    Divergence { t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
