use std::time::Duration;

use bytes::Bytes;

use super::{RetransmitQueue, SrAck, SrConfig, SrError};
use crate::rng::SimRng;
use crate::sdr::{Arrival, DiscardReason, QpConfig, RecvQp, SendQp, StreamSend, TraceRecord, TransportImmediate};
use crate::simnet::{ChannelParams, EventId, EventQueue, Link, Packet, SimTime};

/// Everything needed to run one SR transfer over the simulated channel.
#[derive(Clone, Debug)]
pub struct SrSimConfig {
    pub qp: QpConfig,
    pub sr: SrConfig,
    /// Sender to receiver data path.
    pub data: ChannelParams,
    /// Drop probability of the reverse control path.
    pub ctrl_p_drop: f64,
    /// Data-link transmission sequence numbers (packets) to drop.
    pub forced_drops: Vec<u64>,
    pub deadline: Option<Duration>,
    pub trace: bool,
}

impl SrSimConfig {
    pub fn new(qp: QpConfig, sr: SrConfig, data: ChannelParams) -> Self {
        SrSimConfig {
            qp,
            sr,
            data,
            ctrl_p_drop: 0.0,
            forced_drops: Vec::new(),
            deadline: None,
            trace: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SrReport {
    /// From the start of the first injection to the ACK covering every chunk.
    pub completion: Duration,
    pub delivered: Vec<u8>,
    pub chunks: usize,
    /// First injections plus retransmissions.
    pub chunk_injections: u64,
    pub retransmissions: u64,
    pub packets_sent: u64,
    pub packets_dropped: u64,
    /// Every ACK the receiver emitted, in order.
    pub acks: Vec<SrAck>,
    /// `(start time, chunk)` of every chunk injection.
    pub injections: Vec<(SimTime, usize)>,
    /// When the sender dequeued each chunk.
    pub dequeued_at: Vec<Option<SimTime>>,
    pub trace: Vec<TraceRecord>,
}

enum Ev {
    Data(Packet),
    Ack(Bytes),
    Rto(usize),
    Poll,
}

struct Tracer {
    on: bool,
    split: crate::sdr::ImmSplit,
    records: Vec<TraceRecord>,
}

impl Tracer {
    fn log(&mut self, time: SimTime, event: &'static str, pkt: Option<&Packet>, action: impl FnOnce() -> String) {
        if !self.on {
            return;
        }
        let (msg_id, packet_offset, generation) = pkt.map_or((0, 0, 0), |p| {
            let imm = TransportImmediate::decode(p.immediate, self.split);
            (imm.msg_id, imm.packet_offset as u64, p.generation)
        });
        self.records.push(TraceRecord {
            time,
            event,
            msg_id,
            generation,
            packet_offset,
            action: action(),
        });
    }
}

/// Sends `message` with Selective Repeat over a fresh connection and runs the
/// simulation until the sender holds an ACK covering every chunk.
pub fn sr_send(message: Bytes, cfg: &SrSimConfig, rng: &mut SimRng) -> Result<SrReport, SrError> {
    cfg.sr.validate()?;
    let len = message.len();
    let chunk_bytes = cfg.qp.chunk_bytes();
    let mut tx = SendQp::new(cfg.qp.clone())?;
    let mut rx = RecvQp::new(cfg.qp.clone())?;
    let (handle, cts) = rx.post(vec![0; len], false)?;
    tx.on_cts(cts);
    let mut stream = tx.send_stream_start(None)?;
    let chunks = cfg.qp.chunks_for(len as u64);

    let mut data_link = Link::new(cfg.data.clone())?;
    data_link.force_drops(cfg.forced_drops.iter().copied());
    let mut ctrl_link = Link::new(ChannelParams {
        p_drop: cfg.ctrl_p_drop,
        reorder_jitter: Duration::ZERO,
        ..cfg.data.clone()
    })?;
    let mut q: EventQueue<Ev> = EventQueue::new();
    let mut tracer = Tracer {
        on: cfg.trace,
        split: cfg.qp.imm_split,
        records: Vec::new(),
    };

    let mut sender = Sender {
        queue: RetransmitQueue::new(chunks),
        message,
        chunk_bytes,
        rto: cfg.sr.rto,
        injections: Vec::new(),
        chunk_injections: 0,
    };
    for c in 0..chunks {
        sender.inject(c, &mut stream, &mut data_link, &mut q, rng, &mut tracer)?;
    }
    q.schedule_after(cfg.sr.ack_poll_period, Ev::Poll);

    let window = cfg.sr.selective_window_bytes;
    let mut delivered: Option<Vec<u8>> = None;
    let mut activity = false;
    let mut acks = Vec::new();
    let mut retransmissions = 0u64;
    let mut dequeued_at = vec![None; chunks];
    let deadline = cfg.deadline.map(|d| SimTime::ZERO + d);

    let completion = loop {
        let Some((now, ev)) = q.pop() else {
            unreachable!("the receiver poll keeps the queue non-empty");
        };
        if deadline.is_some_and(|d| now > d) {
            return Err(SrError::DeadlineExceeded(now));
        }
        match ev {
            Ev::Data(pkt) => {
                activity = true;
                match rx.on_packet(&pkt) {
                    Arrival::Accepted {
                        chunk_completed,
                        duplicate,
                        ..
                    } => {
                        tracer.log(now, "arrive", Some(&pkt), || {
                            if duplicate { "duplicate" } else { "accept" }.to_string()
                        });
                        if let Some(c) = chunk_completed {
                            tracer.log(now, "chunk", Some(&pkt), || format!("chunk {c} bit set"));
                        }
                    }
                    Arrival::Discarded { reason, .. } => {
                        tracer.log(now, "discard", Some(&pkt), || discard_label(reason).to_string());
                    }
                }
            }
            Ev::Poll => {
                if activity {
                    activity = false;
                    let ack = match &delivered {
                        Some(_) => SrAck {
                            cumulative: chunks as i32 - 1,
                            selective: vec![0; window],
                        },
                        None => {
                            let bitmap = rx.bitmap(handle)?;
                            let ack = SrAck::from_bitmap(bitmap, window);
                            if bitmap.all() {
                                delivered = Some(rx.complete(handle)?.buffer);
                                tracer.log(now, "recv_complete", None, || "receive completed".into());
                            }
                            ack
                        }
                    };
                    let wire = ack.encode();
                    tracer.log(now, "ack_tx", None, || ack_label(&ack));
                    if let Some(at) = ctrl_link.transmit(wire.len(), now, rng).arrival {
                        q.schedule(at, Ev::Ack(wire))?;
                    } else {
                        tracer.log(now, "ack_drop", None, || ack_label(&ack));
                    }
                    acks.push(ack);
                }
                q.schedule_after(cfg.sr.ack_poll_period, Ev::Poll);
            }
            Ev::Ack(wire) => {
                let ack = SrAck::decode(&wire, window)?;
                tracer.log(now, "ack_rx", None, || ack_label(&ack));
                for (c, timer) in sender.queue.on_ack(&ack) {
                    dequeued_at[c] = Some(now);
                    if let Some(id) = timer {
                        q.cancel(id);
                    }
                }
                if sender.queue.all_acked() {
                    stream.send_end()?;
                    tracer.log(now, "send_complete", None, || "all chunks acknowledged".into());
                    break now;
                }
            }
            Ev::Rto(c) => {
                sender.queue.disarm(c);
                if !sender.queue.is_acked(c) {
                    retransmissions += 1;
                    tracer.log(now, "rto", None, || format!("retransmit chunk {c}"));
                    sender.inject(c, &mut stream, &mut data_link, &mut q, rng, &mut tracer)?;
                }
            }
        }
    };

    let delivered = delivered.expect("sender completes only after the receiver does");
    Ok(SrReport {
        completion: completion.saturating_since(SimTime::ZERO),
        delivered,
        chunks,
        chunk_injections: sender.chunk_injections,
        retransmissions,
        packets_sent: data_link.transmitted(),
        packets_dropped: data_link.dropped(),
        acks,
        injections: sender.injections,
        dequeued_at,
        trace: tracer.records,
    })
}

struct Sender {
    queue: RetransmitQueue<EventId>,
    message: Bytes,
    chunk_bytes: usize,
    rto: Duration,
    injections: Vec<(SimTime, usize)>,
    chunk_injections: u64,
}

impl Sender {
    fn inject(
        &mut self,
        c: usize,
        stream: &mut StreamSend,
        link: &mut Link,
        q: &mut EventQueue<Ev>,
        rng: &mut SimRng,
        tracer: &mut Tracer,
    ) -> Result<(), SrError> {
        let now = q.now();
        let start = c * self.chunk_bytes;
        let end = (start + self.chunk_bytes).min(self.message.len());
        let packets = stream.send_continue(start as u64, self.message.slice(start..end))?;
        self.injections.push((now.max(link.busy_until()), c));
        self.chunk_injections += 1;
        let mut done = now;
        for pkt in packets {
            let out = link.transmit(pkt.payload_len(), now, rng);
            done = out.injected_at;
            match out.arrival {
                Some(at) => {
                    tracer.log(out.injected_at, "inject", Some(&pkt), || format!("chunk {c}"));
                    q.schedule(at, Ev::Data(pkt))?;
                }
                None => tracer.log(out.injected_at, "drop", Some(&pkt), || format!("chunk {c} lost")),
            }
        }
        let timer = q.schedule(done + self.rto, Ev::Rto(c))?;
        self.queue.arm(c, timer);
        Ok(())
    }
}

pub(crate) fn discard_label(reason: DiscardReason) -> &'static str {
    match reason {
        DiscardReason::Nulled => "discard completed slot",
        DiscardReason::StaleGeneration => "discard stale generation",
        DiscardReason::OutOfRange => "discard out of range",
    }
}

pub(crate) fn ack_label(ack: &SrAck) -> String {
    let sel: Vec<String> = ack
        .acked()
        .skip((ack.cumulative + 1) as usize)
        .map(|c| c.to_string())
        .collect();
    format!("cum={} sel=[{}]", ack.cumulative, sel.join(" "))
}
