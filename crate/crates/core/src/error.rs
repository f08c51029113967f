use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("site count mismatch: operator acts on {expected} sites, state has {found}")]
    SiteMismatch { expected: usize, found: usize },

    #[error("dense dimension 2^{sites} exceeds the cap 2^{cap}")]
    DenseCap { sites: usize, cap: usize },

    #[error("expectation value has imaginary part {imag:e}; operator is not Hermitian")]
    NotHermitian { imag: f64 },

    #[error("linear system is ill-conditioned (condition number {condition:e} > {threshold:e})")]
    IllConditioned { condition: f64, threshold: f64 },

    #[error("linear system is inconsistent (residual {residual:e})")]
    Inconsistent { residual: f64 },

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
