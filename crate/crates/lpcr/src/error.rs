use thiserror::Error;

/// Errors produced by model construction, likelihood evaluation, fitting,
/// and the simulation harness.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument violates a precondition (non-positive scale, out-of-range
    /// component count, shape mismatch, non-PD input, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Loadings are rank-deficient where full column rank is required.
    #[error("degenerate loadings: {0}")]
    DegenerateLoadings(String),

    /// The residual Gram matrix Y'Q_{XL}Y is singular, so the profiled
    /// likelihood is undefined at this point.
    #[error("degenerate likelihood: {0}")]
    DegenerateLikelihood(String),

    /// The minimizer set is empty for this data and component count
    /// (rank(S_X) too small or Y'Q_X Y non-invertible).
    #[error("existence violation: {0}")]
    ExistenceViolation(String),

    /// The objective decreased without bound while the loadings grew,
    /// i.e. the empty-minimizer regime was reached numerically.
    #[error("divergence: {0}")]
    Divergence(String),

    /// A requested configuration is outside the supported scope
    /// (e.g. Krylov PLS with more than one response).
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// A predictor column is constant on the training rows and cannot be
    /// scaled.
    #[error("constant column: predictor {name:?} (column {index}) has zero variance on the training rows")]
    ConstantColumn { name: String, index: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
