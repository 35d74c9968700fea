use std::collections::BTreeSet;
use std::time::Duration;

use bytes::Bytes;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{duration_from_secs, SimError, SimTime};

/// Parameters of the long-haul sender-receiver channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    pub bandwidth_bits_per_sec: f64,
    /// Full round trip; one-way latency is `rtt / 2`.
    #[serde(with = "serde_secs")]
    pub rtt: Duration,
    /// Drop probability applied independently to every transmitted packet.
    pub p_drop: f64,
    /// Switch-buffering coefficient: `RTO = RTT + alpha * RTT`.
    pub alpha: f64,
    /// Receiver-side buffering coefficient used by the EC fallback timeout.
    pub beta: f64,
    /// Upper bound of the uniform extra per-packet delay (0 = in order).
    #[serde(with = "serde_secs")]
    pub reorder_jitter: Duration,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            bandwidth_bits_per_sec: 400e9,
            rtt: Duration::from_millis(25),
            p_drop: 0.0,
            alpha: 2.0,
            beta: 1.0,
            reorder_jitter: Duration::ZERO,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |field, reason: &str| {
            Err(SimError::InvalidParam {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.bandwidth_bits_per_sec.is_finite() && self.bandwidth_bits_per_sec > 0.0) {
            return bad("bandwidth_bits_per_sec", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_drop) {
            return bad("p_drop", "must lie in [0, 1]");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha", "must be non-negative");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad("beta", "must be non-negative");
        }
        Ok(())
    }

    pub fn one_way(&self) -> Duration {
        self.rtt / 2
    }

    /// Serialization time of `bytes` at link bandwidth, rounded to a tick.
    pub fn serialization(&self, bytes: usize) -> Duration {
        duration_from_secs(bytes as f64 * 8.0 / self.bandwidth_bits_per_sec)
    }

    /// Retransmission timeout `RTT + alpha * RTT`.
    pub fn rto(&self) -> Duration {
        duration_from_secs(self.rtt.as_secs_f64() * (1.0 + self.alpha))
    }
}

/// A single-packet unreliable write as it travels over the link.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packet {
    pub payload: Bytes,
    /// Encoded 32-bit transport immediate.
    pub immediate: u32,
    pub dest_offset_bytes: u64,
    pub channel_qp_index: u32,
    /// Generation of the internal QP the packet was sent on.
    pub generation: u32,
}

impl Packet {
    pub fn payload_len(&self) -> usize {
        self.payload.len()
    }
}

/// Result of handing one packet to the link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TxOutcome {
    /// Per-link transmission sequence number, starting at 0.
    pub seq: u64,
    /// When the last bit left the sender.
    pub injected_at: SimTime,
    /// Arrival time at the receiver, `None` if dropped.
    pub arrival: Option<SimTime>,
}

/// Unidirectional lossy link with a FIFO serialization queue at the sender.
#[derive(Debug, Clone)]
pub struct Link {
    params: ChannelParams,
    busy_until: SimTime,
    next_seq: u64,
    forced_drops: BTreeSet<u64>,
    dropped: u64,
}

impl Link {
    pub fn new(params: ChannelParams) -> Result<Self, SimError> {
        params.validate()?;
        Ok(Link {
            params,
            busy_until: SimTime::ZERO,
            next_seq: 0,
            forced_drops: BTreeSet::new(),
            dropped: 0,
        })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// Drop the transmissions with these sequence numbers regardless of
    /// `p_drop`.
    pub fn force_drops(&mut self, seqs: impl IntoIterator<Item = u64>) {
        self.forced_drops.extend(seqs);
    }

    /// Time at which the sender's serialization queue drains.
    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    pub fn transmitted(&self) -> u64 {
        self.next_seq
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Serializes `payload_len` bytes behind any queued traffic and decides
    /// the packet's fate. The drop draw always precedes the jitter draw so the
    /// drop pattern does not depend on the jitter setting.
    pub fn transmit<R: Rng + ?Sized>(
        &mut self,
        payload_len: usize,
        now: SimTime,
        rng: &mut R,
    ) -> TxOutcome {
        let seq = self.next_seq;
        self.next_seq += 1;

        let start = now.max(self.busy_until);
        let injected_at = start + self.params.serialization(payload_len);
        self.busy_until = injected_at;

        let random_drop = rng.random::<f64>() < self.params.p_drop;
        if random_drop || self.forced_drops.remove(&seq) {
            self.dropped += 1;
            return TxOutcome {
                seq,
                injected_at,
                arrival: None,
            };
        }
        let mut arrival = injected_at + self.params.one_way();
        if !self.params.reorder_jitter.is_zero() {
            let j = rng.random_range(0..=self.params.reorder_jitter.as_nanos() as u64);
            arrival += Duration::from_nanos(j);
        }
        TxOutcome {
            seq,
            injected_at,
            arrival: Some(arrival),
        }
    }

    /// Convenience wrapper over [`Link::transmit`] for a full packet.
    pub fn transmit_packet<R: Rng + ?Sized>(
        &mut self,
        pkt: &Packet,
        now: SimTime,
        rng: &mut R,
    ) -> Option<SimTime> {
        self.transmit(pkt.payload_len(), now, rng).arrival
    }
}

pub(crate) mod serde_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        if !(secs.is_finite() && secs >= 0.0) {
            return Err(serde::de::Error::custom("duration must be non-negative seconds"));
        }
        Ok(super::duration_from_secs(secs))
    }
}
