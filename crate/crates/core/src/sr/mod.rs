//! Selective Repeat reliability over streaming sends: per-chunk retransmission
//! timers, and cumulative plus selective acknowledgements generated by polling
//! the receiver's chunk bitmap.

mod ack;
mod protocol;
mod queue;

pub use ack::SrAck;
pub use protocol::{sr_send, SrReport, SrSimConfig};
pub(crate) use protocol::{ack_label, discard_label};
pub use queue::RetransmitQueue;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdr::SdrError;
use crate::simnet::{ChannelParams, SimError, SimTime};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SrError {
    #[error("invalid SR configuration: {0}")]
    BadConfig(String),
    #[error("malformed ACK: {0}")]
    MalformedAck(String),
    #[error("transfer not complete by the deadline at {0}")]
    DeadlineExceeded(SimTime),
    #[error(transparent)]
    Sdr(#[from] SdrError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SrVariant {
    /// Retransmit after `RTT + alpha * RTT`.
    Rto,
    /// Negative-acknowledgement behaviour, approximated as a one-RTT timeout.
    Nack,
}

impl std::fmt::Display for SrVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SrVariant::Rto => "sr_rto",
            SrVariant::Nack => "sr_nack",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrConfig {
    pub variant: SrVariant,
    pub rto: Duration,
    pub ack_poll_period: Duration,
    pub selective_window_bytes: usize,
}

impl SrConfig {
    /// Defaults for a channel: the variant's timeout and a poll period of
    /// `max(RTT / 8, 4 * chunk_t_inj)`.
    pub fn for_channel(variant: SrVariant, channel: &ChannelParams, chunk_t_inj: Duration) -> Self {
        let rto = match variant {
            SrVariant::Rto => channel.rto(),
            SrVariant::Nack => channel.rtt,
        };
        SrConfig {
            variant,
            rto,
            ack_poll_period: (channel.rtt / 8).max(chunk_t_inj * 4),
            selective_window_bytes: 64,
        }
    }

    /// Timeout in seconds, as used by the analytical model.
    pub fn rto_secs(&self) -> f64 {
        self.rto.as_secs_f64()
    }

    pub fn validate(&self) -> Result<(), SrError> {
        if self.rto.is_zero() {
            return Err(SrError::BadConfig("rto must be positive".into()));
        }
        if self.ack_poll_period.is_zero() {
            return Err(SrError::BadConfig("ack_poll_period must be positive".into()));
        }
        Ok(())
    }
}

/// Model timeout for a variant: `rtt (1 + alpha)` or one `rtt`.
pub fn variant_rto_secs(variant: SrVariant, rtt: f64, alpha: f64) -> f64 {
    match variant {
        SrVariant::Rto => crate::model::rto(rtt, alpha),
        SrVariant::Nack => rtt,
    }
}
