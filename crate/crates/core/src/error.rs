use thiserror::Error;

/// Errors raised by the solvers and the post-processing harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside the domain where the model is defined.
    #[error("parameter `{field}` out of domain: {message}")]
    ParameterDomain { field: String, message: String },

    /// An operation was called with incompatible arguments.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data that cannot be processed (e.g. non-positive values on a log scale).
    #[error("data error: {0}")]
    Data(String),

    /// An iterative solver failed to converge.
    #[error("{solver} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    /// The discrete system could not be factorized.
    #[error("configuration error: {0}")]
    Configuration(String),
}

impl Error {
    pub(crate) fn domain(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ParameterDomain {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ParameterDomain { .. } => "parameter_domain",
            Error::Usage(_) => "usage",
            Error::Data(_) => "data",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Configuration(_) => "configuration",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
