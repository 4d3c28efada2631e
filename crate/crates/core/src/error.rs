use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is rank deficient (condition estimate {ratio:.3e} below {threshold:.0e})")]
    Singular { ratio: f64, threshold: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("column {0} is identically zero")]
    ZeroColumn(usize),

    #[error(
        "{what}: {count} subsets exceed the enumeration budget of {budget}{hint}",
        hint = if *.suggest_sampling { "; use monte_carlo_rip_lower_bound instead" } else { "" }
    )]
    BudgetExceeded {
        what: &'static str,
        count: u128,
        budget: u128,
        suggest_sampling: bool,
    },

    #[error("noise power sigma0^2 is zero; SNR is undefined")]
    ZeroNoisePower,

    #[error("RIP constant {0} is not in [0, 1); the SNR ratio bounds are undefined")]
    InvalidRipConstant(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
