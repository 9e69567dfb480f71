use thiserror::Error;

use crate::engine::SimTime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("event scheduled in the past (at {at}, now {now}); this is an engine bug")]
    ScheduledInPast { at: SimTime, now: SimTime },

    #[error("no nodes deployed")]
    NoNodes,

    #[error("degenerate geometry: distance {0} m")]
    DegenerateGeometry(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("trace parse error at line {line}: {msg}")]
    TraceParse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
