use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("support violation at symbol {index}: q > 0 where reference is 0")]
    SupportViolation { index: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("prior has non-positive entry at symbol {index}")]
    NonPositivePrior { index: usize },

    #[error("alphabet of size {size} exceeds the enumeration limit {max}")]
    AlphabetTooLarge { size: usize, max: usize },

    #[error("moment constraints infeasible (violated: {violated:?}, jointly infeasible: {joint})")]
    Infeasible { violated: Vec<usize>, joint: bool },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("mixture component {component} received no responsibility mass")]
    DegenerateComponent { component: usize },

    #[error("observation {index} has zero likelihood under every component")]
    ZeroLikelihood { index: usize },

    #[error("zero coordinate at index {index}; iterate must be strictly positive")]
    ZeroCoordinate { index: usize },

    #[error("gradient check failed for '{descriptor}': max error {max_error:e} at point {point}")]
    GradientMismatch {
        descriptor: String,
        max_error: f64,
        point: usize,
    },

    #[error("symbol {symbol} outside alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },
}

impl Error {
    /// Stable machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDistribution(_) => "invalid_distribution",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::SupportViolation { .. } => "support_violation",
            Error::EmptyInput(_) => "empty_input",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NonPositivePrior { .. } => "non_positive_prior",
            Error::AlphabetTooLarge { .. } => "alphabet_too_large",
            Error::Infeasible { .. } => "infeasible",
            Error::NotConverged { .. } => "not_converged",
            Error::DegenerateComponent { .. } => "degenerate_component",
            Error::ZeroLikelihood { .. } => "zero_likelihood",
            Error::ZeroCoordinate { .. } => "zero_coordinate",
            Error::GradientMismatch { .. } => "gradient_mismatch",
            Error::SymbolOutOfRange { .. } => "symbol_out_of_range",
        }
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
