use alloc::string::String;

use crate::event::OrderKey;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("simulation time overflow ({lhs} + {rhs} ps)")]
    TimeOverflow { lhs: i64, rhs: i64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("malformed encoding: {0}")]
    Decode(String),

    #[error("handler of {target} failed on event {key:?}: {reason}")]
    Handler {
        key: OrderKey,
        target: String,
        reason: String,
    },

    #[error("causality violation: {0}")]
    Causality(String),

    #[error("synchronization protocol violation: {0}")]
    Protocol(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("watchdog expired: {0}")]
    Watchdog(String),

    #[error("DMSI: request `{tag}` of {requester} was never answered")]
    UnansweredRequest { requester: String, tag: String },

    #[error("DMSI: {0}")]
    Dmsi(String),

    #[error("trace sink: {0}")]
    Trace(String),

    #[error("network model: {0}")]
    Model(String),
}
