use thiserror::Error;

/// Errors reported by the estimator and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum VqfError {
    /// A parameter is outside its valid range. `field` names the offending
    /// parameter or argument.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam {
        field: &'static str,
        reason: &'static str,
    },
    /// An input sample contains NaN or infinite components. The filter state
    /// is left untouched when this is reported.
    #[error("non-finite sample component")]
    NonFiniteSample,
    /// Input series passed to a batch operation differ in length.
    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    /// A batch operation needs more samples than were provided.
    #[error("input series too short: got {got}, need at least {need}")]
    TooShort { got: usize, need: usize },
    /// The innovation covariance of the bias Kalman filter is numerically
    /// singular; the measurement update was skipped.
    #[error("singular innovation covariance, bias update skipped")]
    SingularInnovation,
    /// The reference vectors handed to an initialization helper are
    /// (numerically) collinear and do not define a full orientation.
    #[error("reference vectors are collinear")]
    CollinearReference,
}
