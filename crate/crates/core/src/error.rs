//! Error type shared across the engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("format error at record {record:?}: {message}")]
    Format {
        record: Option<u64>,
        message: String,
    },

    #[error("modality error: {0}")]
    Modality(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("duplicate id: {0}")]
    Duplicate(String),

    #[error("invalid tree node {0}: {1}")]
    InvalidNode(usize, &'static str),

    #[error("search over empty store")]
    EmptySearch,

    #[error("stale index: {0}")]
    StaleIndex(String),

    #[error("timestamp regression: {new} is earlier than last stored {last}")]
    Order { last: String, new: String },

    #[error("date error: {0}")]
    Date(String),

    #[error("unknown core memory section {0:?} (expected \"persona\" or \"human\")")]
    Section(String),

    #[error("no exact match for {0:?}")]
    NoMatch(String),

    #[error("token budget {budget} cannot hold core memory of {required} tokens")]
    Budget { budget: usize, required: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(record: Option<u64>, message: impl Into<String>) -> Self {
        Error::Format {
            record,
            message: message.into(),
        }
    }

    /// Stable, machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "DimensionError",
            Error::EmptyInput(_) => "EmptyInputError",
            Error::InvalidEmbedding(_) => "ValidationError",
            Error::Format { .. } => "FormatError",
            Error::Modality(_) => "ModalityError",
            Error::Validation(_) => "ValidationError",
            Error::NotFound(_) => "NotFoundError",
            Error::Duplicate(_) => "DuplicateError",
            Error::InvalidNode(..) => "InvalidNodeError",
            Error::EmptySearch => "EmptySearchError",
            Error::StaleIndex(_) => "StaleIndexError",
            Error::Order { .. } => "OrderError",
            Error::Date(_) => "DateError",
            Error::Section(_) => "SectionError",
            Error::NoMatch(_) => "NoMatchError",
            Error::Budget { .. } => "BudgetError",
            Error::Io(_) => "IoError",
        }
    }
}
