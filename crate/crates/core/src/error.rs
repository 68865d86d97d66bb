use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} mismatch: {left} vs {right}")]
    Mismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("{op} is undefined at value {value}")]
    Domain { op: &'static str, value: f64 },

    #[error("derivative order {requested} exceeds the supported maximum {max}")]
    OrderTooHigh { requested: usize, max: usize },

    #[error("{quantity} requires derivative order {required} (have {available})")]
    InsufficientOrder {
        quantity: String,
        required: usize,
        available: usize,
    },

    #[error("unsupported dimension {0}")]
    Dimension(usize),

    #[error("syntax error at {line}:{col}: {msg}")]
    Parse {
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("unknown identifier `{name}` at {line}:{col}")]
    UnknownIdentifier {
        name: String,
        line: usize,
        col: usize,
    },

    #[error("`{name}` takes {expected} argument(s), found {found} at {line}:{col}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        line: usize,
        col: usize,
    },

    #[error("parameter `{0}` has no value")]
    UnknownParameter(String),

    #[error("variable x{index} used in dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize },

    #[error("point {point:?} lies inside the excluded ball of radius {inner_radius}")]
    OutOfDomain { point: Vec<f64>, inner_radius: f64 },

    #[error("metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },

    #[error("metric matrix is singular at {point:?}")]
    Singular { point: Vec<f64> },

    #[error("non-finite value in {what} at {point:?}")]
    NonFinite { what: String, point: Vec<f64> },

    #[error("unknown catalog metric `{0}`")]
    UnknownCatalog(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn insufficient(
        quantity: impl Into<String>,
        required: usize,
        available: usize,
    ) -> Self {
        Error::InsufficientOrder {
            quantity: quantity.into(),
            required,
            available,
        }
    }

    /// True for errors that come from the user's configuration rather than
    /// from evaluating a metric at a point.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::UnknownIdentifier { .. }
                | Error::Arity { .. }
                | Error::UnknownParameter(_)
                | Error::VariableOutOfRange { .. }
                | Error::UnknownCatalog(_)
                | Error::Invalid(_)
                | Error::Dimension(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}
