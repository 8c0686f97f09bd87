use thiserror::Error;

/// Errors produced by the numerical routines.
///
/// The variants map one-to-one onto the failure classes a caller has to
/// distinguish: bad input, a parameter regime where the requested object
/// does not exist, a budget guard, or a linear-algebra failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested object is not defined in this (alpha, d) regime.
    #[error("regime violation: {message} (requires {condition})")]
    Regime {
        message: String,
        condition: &'static str,
    },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("factorization failed: min eigenvalue {min_eigenvalue:.3e} (trace {trace:.3e})")]
    Factorization { min_eigenvalue: f64, trace: f64 },

    #[error("mismatched grids: {0}")]
    MismatchedGrid(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn stratonovich_needs_d1(d: usize) -> Self {
        Error::Regime {
            message: format!("Stratonovich exponential moments are infinite for d = {d}"),
            condition: "d = 1 (exponential integrability holds if and only if d = 1)",
        }
    }

    pub(crate) fn skorohod_existence(alpha: f64, d: usize) -> Self {
        Error::Regime {
            message: format!("no square-integrable Skorohod solution for alpha = {alpha}, d = {d}"),
            condition: "d < 2 + alpha",
        }
    }

    pub(crate) fn fk_solution_needs_d1(d: usize) -> Self {
        Error::Regime {
            message: format!("pathwise Feynman-Kac representation unavailable for d = {d}"),
            condition: "d = 1",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
