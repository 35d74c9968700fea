//! Partial-completion messaging over single-packet unreliable writes.
//!
//! The sender splits each message into MTU-sized packets, each carrying a
//! 32-bit transport immediate (message ID, packet offset, user-immediate
//! fragment). The receiver tracks a per-packet bitmap per message and
//! coalesces it into the chunk bitmap exposed to reliability layers.
//! Sends are matched to posted receives purely by order.
//!
//! Late packets are fenced off in two stages: completed slots discard
//! payloads (the NULL-key stage), and every packet carries the generation of
//! the internal QP it was sent on, which must match the slot's current
//! generation.

mod bitmap;
mod imm;
mod recv;
mod send;
mod trace;

pub use bitmap::Bitmap;
pub use imm::{ImmSplit, TransportImmediate};
pub use recv::{Arrival, CompletedRecv, DiscardReason, RecvHandle, RecvQp, RecvStats};
pub use send::{Cts, OneShotSend, SendHandle, SendMode, SendQp, StreamSend};
pub use trace::TraceRecord;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SdrError {
    #[error("field `{field}` value {value} does not fit in {bits} bits")]
    FieldOverflow {
        field: &'static str,
        value: u64,
        bits: u8,
    },
    #[error("immediate split {0}+{1}+{2} does not sum to 32 bits")]
    BadSplit(u8, u8, u8),
    #[error("invalid QP configuration: {0}")]
    BadConfig(String),
    #[error("message slot {msg_id} is still posted; retry after it completes")]
    Backpressure { msg_id: u32 },
    #[error("message of {len} bytes exceeds the maximum of {max} bytes")]
    MessageTooLarge { len: u64, max: u64 },
    #[error("message of {len} bytes exceeds the matched {remote} byte receive buffer")]
    ExceedsRemoteBuffer { len: u64, remote: u64 },
    #[error("no clear-to-send received for the next receive in order")]
    NoClearToSend,
    #[error("a user immediate needs at least {needed} packets, message has {packets}")]
    ImmediateTooShort { needed: u64, packets: u64 },
    #[error("stream is closed")]
    StreamClosed,
    #[error("remote offset {0} is not MTU aligned")]
    UnalignedOffset(u64),
    #[error("receive handle is not posted (completed or stale)")]
    NotPosted,
    #[error("message was posted without a user immediate")]
    NoImmediate,
}

/// Per-QP configuration shared by both ends of a connection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpConfig {
    pub mtu_bytes: usize,
    /// Packets per chunk bitmap bit.
    pub chunk_size_packets: usize,
    pub max_msg_size_bytes: u64,
    /// Number of message generations (internal QPs) per SDR QP.
    pub generations: u32,
    pub imm_split: ImmSplit,
    /// Channel QPs packets are striped across.
    pub num_channels: u32,
}

impl Default for QpConfig {
    fn default() -> Self {
        QpConfig {
            mtu_bytes: 4096,
            chunk_size_packets: 16,
            max_msg_size_bytes: 1 << 30,
            generations: 4,
            imm_split: ImmSplit::default(),
            num_channels: 1,
        }
    }
}

impl QpConfig {
    pub fn validate(&self) -> Result<(), SdrError> {
        let bad = |s: String| Err(SdrError::BadConfig(s));
        if self.mtu_bytes == 0 {
            return bad("mtu_bytes must be positive".into());
        }
        if self.chunk_size_packets == 0 {
            return bad("chunk_size_packets must be at least 1".into());
        }
        if self.generations == 0 {
            return bad("generations must be at least 1".into());
        }
        if self.num_channels == 0 {
            return bad("num_channels must be at least 1".into());
        }
        let split = self.imm_split;
        ImmSplit::new(split.msg_id_bits, split.offset_bits, split.frag_bits)?;
        let addressable = (1u64 << split.offset_bits) * self.mtu_bytes as u64;
        if self.max_msg_size_bytes == 0 || self.max_msg_size_bytes > addressable {
            return bad(format!(
                "max_msg_size_bytes must be in 1..={addressable} for a {}-bit offset",
                split.offset_bits
            ));
        }
        Ok(())
    }

    pub fn max_inflight_msgs(&self) -> usize {
        1usize << self.imm_split.msg_id_bits
    }

    pub fn chunk_bytes(&self) -> usize {
        self.mtu_bytes * self.chunk_size_packets
    }

    pub fn packets_for(&self, len: u64) -> u64 {
        len.div_ceil(self.mtu_bytes as u64)
    }

    pub fn chunks_for(&self, len: u64) -> usize {
        self.packets_for(len).div_ceil(self.chunk_size_packets as u64) as usize
    }

    /// Root-key address of `packet` in message slot `msg_id`: slot `i`
    /// owns `[i * max_msg, (i + 1) * max_msg)`.
    pub fn root_offset(&self, msg_id: u32, packet: u64) -> u64 {
        msg_id as u64 * self.max_msg_size_bytes + packet * self.mtu_bytes as u64
    }
}
