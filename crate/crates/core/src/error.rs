use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants are grouped by what the caller can do about them: structural
/// and domain errors are caller bugs, assumption violations mean the
/// requested regime is outside what the theory covers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate feature at theta = {theta}: empirical norm is zero")]
    DegenerateFeature { theta: f64 },

    #[error("positivity violation: g_T({theta}) = {value} is not positive")]
    Positivity { theta: f64, value: f64 },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("separation violation: linear system condition number {cond:e} exceeds {limit:e}")]
    Separation { cond: f64, limit: f64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
