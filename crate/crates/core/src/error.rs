use thiserror::Error;

/// Errors raised by the engine, ingestion and scenario layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DcaError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid configuration `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("signal snapshot for tick {got} is older than tissue tick {current}")]
    StaleSignal { got: u64, current: u64 },

    #[error("signal snapshot for tick {got} is ahead of tissue tick {current}")]
    FutureSignal { got: u64, current: u64 },

    #[error("cannot move engine clock back from tick {current} to {requested}")]
    ClockRewind { current: u64, requested: u64 },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("line {line}: tick {tick} is lower than the previous tick {previous}")]
    NonMonotoneTick {
        line: usize,
        tick: u64,
        previous: u64,
    },

    #[error("no mapping declared for metric `{0}`")]
    UnmappedMetric(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T> = std::result::Result<T, DcaError>;

pub(crate) fn invalid_config(field: impl Into<String>, reason: impl Into<String>) -> DcaError {
    DcaError::InvalidConfig {
        field: field.into(),
        reason: reason.into(),
    }
}
