use thiserror::Error;

/// Errors raised by the simulator and the analytic tools.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("numerical divergence at t = {t} s (last valid state at t = {last_valid} s)")]
    Divergence { t: f64, last_valid: f64 },

    #[error("start-up transient did not settle: {0}")]
    NotSettled(String),

    #[error("breaker is already open")]
    AlreadyIslanded,

    #[error("no auxiliary load is connected")]
    NoAuxLoad,

    #[error("an auxiliary load is already connected")]
    AuxLoadPresent,

    #[error("event at t = {event} s does not match simulation time t = {now} s")]
    EventTime { event: f64, now: f64 },

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error("empty range for `{0}`")]
    EmptyRange(&'static str),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
