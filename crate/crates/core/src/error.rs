use std::io;

use crate::mil::TrainHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A manifest row that cannot be split into the expected fields.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed input that violates a domain rule (unknown variant,
    /// duplicate slide id, bad config value).
    #[error("validation error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { line: Option<usize>, message: String },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("slide {0} has no tissue tiles")]
    EmptyBag(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated stream: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training hit a non-finite loss; the history up to that point is kept.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, history: Box<TrainHistory> },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn validation(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Validation {
            line,
            message: msg.into(),
        }
    }
}
