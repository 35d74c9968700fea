//! Deterministic discrete-event engine and the unreliable long-haul link that
//! every protocol state machine in this crate runs over.
//!
//! Time is kept in integer nanoseconds ([`SimTime`]); durations are
//! [`std::time::Duration`] values rounded to the nearest nanosecond.

mod link;
mod queue;
mod time;

pub use link::{ChannelParams, Link, Packet, TxOutcome};
pub use queue::{EventId, EventQueue};
pub use time::{duration_from_secs, SimTime};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("invalid channel parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
}
