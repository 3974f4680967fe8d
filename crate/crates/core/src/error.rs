use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BffgError {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("point does not match space: {0}")]
    ShapeMismatch(String),

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("unsupported pairing: {0}")]
    Unsupported(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),

    #[error("guided kernel row has zero normalizer at source point {0}")]
    InconsistentRow(String),

    #[error("measure at a parallel node is not a product measure")]
    NonProductMeasure,

    #[error("invalid tree model: {0}")]
    InvalidTree(String),

    #[error("state space too large: {0}")]
    TooLarge(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed model: {0}")]
    Format(String),

    #[error("{location}: {source}")]
    At {
        location: String,
        #[source]
        source: Box<BffgError>,
    },
}

impl BffgError {
    /// Attaches a node or edge label to the error.
    pub fn at(self, location: impl Into<String>) -> Self {
        BffgError::At {
            location: location.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with location wrappers removed.
    pub fn root(&self) -> &BffgError {
        match self {
            BffgError::At { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, BffgError>;
