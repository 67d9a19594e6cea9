use thiserror::Error;

/// Errors produced by the library.
///
/// The variants line up with the CLI exit codes: [`SldsError::InvalidInput`],
/// [`SldsError::Data`] and [`SldsError::Io`] are data errors, [`SldsError::Numerical`]
/// is a numerical failure.
#[derive(Debug, Error)]
pub enum SldsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl SldsError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SldsError::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        SldsError::Numerical(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        SldsError::Data(msg.into())
    }

    /// Prefix the message with where the failure happened, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            SldsError::InvalidInput(m) => SldsError::InvalidInput(format!("{ctx}: {m}")),
            SldsError::Data(m) => SldsError::Data(format!("{ctx}: {m}")),
            SldsError::Numerical(m) => SldsError::Numerical(format!("{ctx}: {m}")),
            SldsError::Io(e) => SldsError::Io(std::io::Error::new(e.kind(), format!("{ctx}: {e}"))),
        }
    }
}

pub type Result<T> = std::result::Result<T, SldsError>;
