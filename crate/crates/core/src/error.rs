use thiserror::Error;

/// Errors produced by the detectors, estimators and harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite sample {value} (channel {channel})")]
    NonFiniteSample { value: f64, channel: usize },

    #[error("expected {expected} channel(s), got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("insufficient history: need {needed} values, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no mu meets target {target}; best candidate mu={best_mu} with rate {best_rate}")]
    NoFeasibleMu {
        target: f64,
        best_mu: f64,
        best_rate: f64,
    },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
