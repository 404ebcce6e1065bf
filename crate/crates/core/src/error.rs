use thiserror::Error;

/// Errors raised by the modems, channel model, detectors and experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("length mismatch in {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("unknown operator `{0}`")]
    UnknownOperator(String),

    #[error("prototype filter is all zero")]
    ZeroPrototype,

    #[error("singular predistortion: through-modem response vanishes at bin {bin}")]
    SingularPredistortion { bin: usize },

    #[error("effective channel is numerically singular; a positive noise variance is required")]
    RegularizationRequired,

    #[error("invalid QAM order {0} (supported: 4, 16, 64)")]
    QamOrder(usize),

    #[error("channel error: {0}")]
    Channel(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn len(what: &'static str, expected: usize, got: usize) -> Self {
        Error::LengthMismatch {
            what,
            expected,
            got,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
