use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mask is empty")]
    EmptyMask,

    #[error("backend does not support {0}")]
    UnsupportedCapability(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    pub fn transport(msg: impl Into<String>) -> Self {
        Error::Transport(msg.into())
    }

    pub fn dataset(msg: impl Into<String>) -> Self {
        Error::InvalidDataset(msg.into())
    }

    /// Stable short code used on the wire and across the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::EmptyMask => "empty_mask",
            Error::UnsupportedCapability(_) => "unsupported_capability",
            Error::Transport(_) => "transport",
            Error::Protocol(_) => "protocol",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::NotFound(_) => "not_found",
            Error::Precondition(_) => "precondition",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Rebuilds an error from a wire code and message.
    pub fn from_code(code: &str, message: String) -> Self {
        match code {
            "invalid_input" => Error::InvalidInput(message),
            "empty_mask" => Error::EmptyMask,
            "unsupported_capability" => Error::UnsupportedCapability(message),
            "transport" => Error::Transport(message),
            "invalid_dataset" => Error::InvalidDataset(message),
            "not_found" => Error::NotFound(message),
            "precondition" => Error::Precondition(message),
            _ => Error::Protocol(message),
        }
    }
}
