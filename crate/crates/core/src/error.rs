use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Adaptive quadrature stopped refining without meeting its tolerance.
    #[error("{what} did not converge: last estimate {last:e}, previous {previous:e}")]
    Convergence {
        what: String,
        last: f64,
        previous: f64,
    },

    #[error("integral for orbital pair ({bra}, {ket}) failed: {source}")]
    Assembly {
        bra: usize,
        ket: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Shifted operator was not positive definite at the requested shift.
    #[error("matrix not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("eigensolver stagnated after {iterations} iterations, worst residual {residual:e}")]
    Stagnation { iterations: usize, residual: f64 },

    #[error("level pairing failed: {0}")]
    Pairing(String),

    #[error("cache file: {0}")]
    Cache(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
