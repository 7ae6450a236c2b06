use thiserror::Error;

/// Errors raised by the numerical and modelling routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {context}: {detail}")]
    Shape { context: &'static str, detail: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("QR iteration did not converge within {budget} iterations (n = {n})")]
    NoConvergence { n: usize, budget: usize },

    #[error("Sylvester equation has no unique solution: eigenvalue gap {gap:.3e} (tolerance {tol:.3e})")]
    NoUniqueSolution { gap: f64, tol: f64 },

    #[error("isolated vertex {0}: zero degree in similarity graph")]
    IsolatedVertex(usize),

    #[error("row {0} has zero norm")]
    ZeroNorm(usize),

    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("index {index} out of range for {what} (len {len})")]
    OutOfRange { what: &'static str, index: usize, len: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn shape(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { context, detail: detail.into() }
    }

    pub(crate) fn param(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParameter { name, detail: detail.into() }
    }

    /// True for failures of the numerics themselves (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::NoConvergence { .. } | Error::NoUniqueSolution { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
