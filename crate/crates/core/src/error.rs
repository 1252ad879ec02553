use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs whose dimensions do not agree.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// A precondition on the arguments of a pure function was violated.
    #[error("invalid argument: {0}")]
    Usage(String),

    /// Incompatible sampler / target / kernel settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// A NaN or infinity showed up where a finite value is required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("quadrature did not converge: estimated error {achieved:e} > tolerance {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        got: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
