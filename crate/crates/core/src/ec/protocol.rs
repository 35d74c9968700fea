use std::collections::HashMap;
use std::time::Duration;

use bytes::{Buf, BufMut, Bytes, BytesMut};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{decodable, ec_decode, ec_encode, EcConfig, EcError};
use crate::rng::SimRng;
use crate::sdr::{Arrival, OneShotSend, QpConfig, RecvHandle, RecvQp, SdrError, SendQp, StreamSend, TraceRecord, TransportImmediate};
use crate::simnet::{duration_from_secs, ChannelParams, EventId, EventQueue, Link, Packet, SimError, SimTime};
use crate::sr::{RetransmitQueue, SrAck, SrConfig, SrError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EcProtocolError {
    #[error("no acknowledgement before the global timeout at {0}")]
    GlobalTimeout(SimTime),
    #[error("malformed control message: {0}")]
    MalformedControl(String),
    #[error("invalid EC transfer configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Ec(#[from] EcError),
    #[error(transparent)]
    Sdr(#[from] SdrError),
    #[error(transparent)]
    Sr(#[from] SrError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Receiver fallback timeout and sender deadlock guard.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FallbackTimers {
    pub fto: Duration,
    pub global_timeout: Duration,
}

impl FallbackTimers {
    /// `fto = (data + parity chunks) * t_inj + beta * rtt` and a global
    /// timeout of `4 fto + 4 rtt`.
    pub fn for_transfer(data_chunks: u64, ec: &EcConfig, chunk_t_inj: Duration, channel: &ChannelParams) -> Self {
        let parity = data_chunks.div_ceil(ec.k as u64) * ec.m as u64;
        let fto = chunk_t_inj * (data_chunks + parity) as u32
            + duration_from_secs(channel.beta * channel.rtt.as_secs_f64());
        FallbackTimers {
            fto,
            global_timeout: fto * 4 + channel.rtt * 4,
        }
    }

    pub fn validate(&self) -> Result<(), EcProtocolError> {
        if self.global_timeout <= self.fto {
            return Err(EcProtocolError::BadConfig("global_timeout must exceed fto".into()));
        }
        Ok(())
    }
}

/// Receiver to sender control messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EcCtrl {
    /// Every data submessage is available.
    Ack,
    /// Data submessages that could not be decoded by the fallback timeout.
    Nack(Vec<u32>),
    /// Selective Repeat acknowledgement for one submessage in fallback.
    SubAck { submessage: u32, ack: SrAck },
}

impl EcCtrl {
    pub fn wire_len(&self) -> usize {
        match self {
            EcCtrl::Ack => 0,
            EcCtrl::Nack(list) => 2 + 4 * list.len(),
            EcCtrl::SubAck { ack, .. } => 4 + 4 + ack.selective.len(),
        }
    }
}

/// NACK wire form: 16-bit big-endian count, then 32-bit submessage indices.
pub fn encode_nack(failed: &[u32]) -> Bytes {
    let mut b = BytesMut::with_capacity(2 + 4 * failed.len());
    b.put_u16(failed.len() as u16);
    failed.iter().for_each(|f| b.put_u32(*f));
    b.freeze()
}

pub fn decode_nack(mut wire: &[u8]) -> Result<Vec<u32>, EcProtocolError> {
    if wire.len() < 2 {
        return Err(EcProtocolError::MalformedControl("short NACK".into()));
    }
    let n = wire.get_u16() as usize;
    if wire.len() != 4 * n {
        return Err(EcProtocolError::MalformedControl(format!(
            "NACK announces {n} entries but carries {} bytes",
            wire.len()
        )));
    }
    Ok((0..n).map(|_| wire.get_u32()).collect())
}

#[derive(Clone, Debug)]
pub struct EcSimConfig {
    pub qp: QpConfig,
    pub ec: EcConfig,
    pub data: ChannelParams,
    pub ctrl_p_drop: f64,
    /// Timeout and poll period used by the fallback Selective Repeat phase;
    /// the poll period also paces the receiver's decodability checks.
    pub sr: SrConfig,
    /// `None` derives the defaults from the transfer size.
    pub timers: Option<FallbackTimers>,
    /// Parity computation cost per data byte, in nanoseconds.
    pub encode_ns_per_byte: f64,
    /// Reconstruction cost per byte of a submessage that needed decoding.
    pub decode_ns_per_byte: f64,
    /// Data-link transmission sequence numbers (packets) to drop.
    pub forced_drops: Vec<u64>,
    pub trace: bool,
}

impl EcSimConfig {
    pub fn new(qp: QpConfig, ec: EcConfig, sr: SrConfig, data: ChannelParams) -> Self {
        EcSimConfig {
            qp,
            ec,
            data,
            ctrl_p_drop: 0.0,
            sr,
            timers: None,
            encode_ns_per_byte: 0.0,
            decode_ns_per_byte: 0.0,
            forced_drops: Vec::new(),
            trace: false,
        }
    }

    pub fn chunk_t_inj(&self) -> Duration {
        self.data.serialization(self.qp.mtu_bytes) * self.qp.chunk_size_packets as u32
    }
}

#[derive(Clone, Debug)]
pub struct EcReport {
    pub completion: Duration,
    pub delivered: Vec<u8>,
    pub timers: FallbackTimers,
    pub data_chunks: u64,
    pub submessages: usize,
    /// Data chunks injected by the initial one-pass send.
    pub data_chunks_injected: u64,
    pub parity_chunks_injected: u64,
    /// Data chunks re-injected by the fallback phase.
    pub retransmitted_chunks: u64,
    /// Submessages listed in the NACK, if one was sent.
    pub nacked: Option<Vec<u32>>,
    /// Submessages reconstructed from parity.
    pub decoded_submessages: usize,
    pub packets_sent: u64,
    pub packets_dropped: u64,
    pub trace: Vec<TraceRecord>,
}

impl EcReport {
    pub fn chunks_injected(&self) -> u64 {
        self.data_chunks_injected + self.parity_chunks_injected + self.retransmitted_chunks
    }

    pub fn fell_back(&self) -> bool {
        self.nacked.is_some()
    }
}

enum Ev {
    Pump,
    Data(Packet),
    Ctrl(EcCtrl),
    /// Receiver sends a control message (possibly after decode latency).
    Emit(EcCtrl),
    Poll,
    Fto,
    Rto(usize, usize),
    GlobalTimeout,
}

/// Layout of the message in submessages and chunks.
struct Layout {
    len: usize,
    chunk_bytes: usize,
    k: usize,
    m: usize,
    subs: usize,
}

impl Layout {
    fn sub_range(&self, s: usize) -> (usize, usize) {
        let start = s * self.k * self.chunk_bytes;
        (start, (start + self.k * self.chunk_bytes).min(self.len))
    }

    fn data_chunks_in(&self, s: usize) -> usize {
        let (a, b) = self.sub_range(s);
        (b - a).div_ceil(self.chunk_bytes)
    }

    /// Block `j` of submessage `s`, zero-padded to a full chunk.
    fn padded_block(&self, bytes: &[u8], j: usize) -> Vec<u8> {
        let mut block = vec![0u8; self.chunk_bytes];
        let start = j * self.chunk_bytes;
        if start < bytes.len() {
            let end = (start + self.chunk_bytes).min(bytes.len());
            block[..end - start].copy_from_slice(&bytes[start..end]);
        }
        block
    }
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

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Coded,
    Fallback,
    Done,
}

struct Receiver {
    rx: RecvQp,
    data: Vec<RecvHandle>,
    parity: Vec<RecvHandle>,
    /// msg_id to submessage, for routing arrivals
    owner: HashMap<u32, usize>,
    done: Vec<Option<Vec<u8>>>,
    phase: Phase,
    fto_armed: bool,
    activity: bool,
    decoded: usize,
    nacked: Option<Vec<u32>>,
}

impl Receiver {
    fn present(&self, lay: &Layout, s: usize) -> Result<Vec<bool>, SdrError> {
        let data = self.rx.bitmap(self.data[s])?;
        let parity = self.rx.bitmap(self.parity[s])?;
        let mut v: Vec<bool> = (0..lay.k).map(|j| j >= data.len() || data.get(j)).collect();
        v.extend(parity.iter());
        Ok(v)
    }

    fn decodable(&self, cfg: &EcConfig, lay: &Layout, s: usize) -> Result<bool, SdrError> {
        Ok(self.done[s].is_some() || decodable(cfg, &self.present(lay, s)?))
    }

    /// Completes submessage `s`, reconstructing missing data chunks from
    /// parity. Returns the number of bytes that needed decoding.
    fn finish(&mut self, cfg: &EcConfig, lay: &Layout, s: usize) -> Result<usize, EcProtocolError> {
        let present = self.present(lay, s)?;
        let data_chunks = lay.data_chunks_in(s);
        let missing = (0..data_chunks).any(|j| !present[j]);
        let mut decoded_bytes = 0;
        if missing {
            let data_buf = self.rx.buffer(self.data[s])?;
            let parity_buf = self.rx.buffer(self.parity[s])?;
            let blocks: Vec<(usize, Vec<u8>)> = (0..lay.k + lay.m)
                .filter(|&b| present[b])
                .map(|b| {
                    let block = if b < lay.k {
                        lay.padded_block(data_buf, b)
                    } else {
                        lay.padded_block(parity_buf, b - lay.k)
                    };
                    (b, block)
                })
                .collect();
            let out = ec_decode(&blocks, cfg)?;
            let buf = self.rx.buffer_mut(self.data[s])?;
            for j in (0..data_chunks).filter(|&j| !present[j]) {
                let start = j * lay.chunk_bytes;
                let end = (start + lay.chunk_bytes).min(buf.len());
                buf[start..end].copy_from_slice(&out[j][..end - start]);
            }
            decoded_bytes = lay.k * lay.chunk_bytes;
            self.decoded += 1;
        }
        let data = self.rx.complete(self.data[s])?;
        self.rx.complete(self.parity[s])?;
        self.done[s] = Some(data.buffer);
        Ok(decoded_bytes)
    }
}

struct Sender {
    data: Vec<StreamSend>,
    parity: Vec<Option<OneShotSend>>,
    parity_ready: Vec<SimTime>,
    next_data: usize,
    next_parity: usize,
    fallback: HashMap<usize, RetransmitQueue<EventId>>,
    data_injected: u64,
    parity_injected: u64,
    retransmitted: u64,
}

/// Sends `message` as erasure-coded submessages and runs the simulation until
/// the sender receives the receiver's positive acknowledgement.
pub fn ec_send(message: Bytes, cfg: &EcSimConfig, rng: &mut SimRng) -> Result<EcReport, EcProtocolError> {
    cfg.ec.validate()?;
    cfg.sr.validate()?;
    let chunk_bytes = cfg.qp.chunk_bytes();
    let lay = Layout {
        len: message.len(),
        chunk_bytes,
        k: cfg.ec.k,
        m: cfg.ec.m,
        subs: message.len().div_ceil(chunk_bytes).div_ceil(cfg.ec.k),
    };
    if lay.len == 0 {
        return Err(EcProtocolError::BadConfig("empty message".into()));
    }
    let data_chunks = lay.len.div_ceil(chunk_bytes) as u64;
    let t_inj = cfg.chunk_t_inj();
    let timers = cfg
        .timers
        .unwrap_or_else(|| FallbackTimers::for_transfer(data_chunks, &cfg.ec, t_inj, &cfg.data));
    timers.validate()?;

    // post 2L receives: data then parity for each submessage
    let mut tx = SendQp::new(cfg.qp.clone())?;
    let mut recv = Receiver {
        rx: RecvQp::new(cfg.qp.clone())?,
        data: Vec::new(),
        parity: Vec::new(),
        owner: HashMap::new(),
        done: vec![None; lay.subs],
        phase: Phase::Coded,
        fto_armed: false,
        activity: false,
        decoded: 0,
        nacked: None,
    };
    let mut sender = Sender {
        data: Vec::new(),
        parity: Vec::new(),
        parity_ready: Vec::new(),
        next_data: 0,
        next_parity: 0,
        fallback: HashMap::new(),
        data_injected: 0,
        parity_injected: 0,
        retransmitted: 0,
    };
    let encode_secs = cfg.encode_ns_per_byte * 1e-9 * (lay.k * chunk_bytes) as f64;
    for s in 0..lay.subs {
        let (a, b) = lay.sub_range(s);
        let (dh, cts) = recv.rx.post(vec![0; b - a], false)?;
        tx.on_cts(cts);
        let (ph, cts) = recv.rx.post(vec![0; lay.m * chunk_bytes], false)?;
        tx.on_cts(cts);
        recv.owner.insert(dh.msg_id, s);
        recv.owner.insert(ph.msg_id, s);
        recv.data.push(dh);
        recv.parity.push(ph);

        sender.data.push(tx.send_stream_start(None)?);
        let bytes = message.slice(a..b);
        let blocks: Vec<Vec<u8>> = (0..lay.k).map(|j| lay.padded_block(&bytes, j)).collect();
        let parity: Vec<u8> = ec_encode(&blocks, &cfg.ec)?.concat();
        sender.parity.push(Some(tx.send_one_shot(Bytes::from(parity), None)?));
        sender.parity_ready.push(SimTime::ZERO + duration_from_secs(encode_secs * (s + 1) as f64));
    }

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
    q.schedule(SimTime::ZERO, Ev::Pump)?;
    q.schedule(SimTime::ZERO + timers.global_timeout, Ev::GlobalTimeout)?;
    q.schedule_after(cfg.sr.ack_poll_period, Ev::Poll);

    let window = cfg.sr.selective_window_bytes;
    let completion = loop {
        let (now, ev) = q.pop().expect("the global timeout is always pending");
        match ev {
            Ev::GlobalTimeout => return Err(EcProtocolError::GlobalTimeout(now)),
            Ev::Pump => {
                // Keep the link busy: ready parity goes first, otherwise the
                // next data submessage. Encoding runs ahead asynchronously.
                if data_link.busy_until() > now {
                    q.schedule(data_link.busy_until(), Ev::Pump)?;
                    continue;
                }
                let s_par = sender.next_parity;
                let parity_ready = s_par < lay.subs && s_par < sender.next_data && sender.parity_ready[s_par] <= now;
                if parity_ready {
                    let send = sender.parity[s_par].take().expect("parity sent once");
                    for pkt in send {
                        transmit(&mut data_link, pkt, now, rng, &mut q, &mut tracer, "parity")?;
                    }
                    sender.parity_injected += lay.m as u64;
                    sender.next_parity += 1;
                } else if sender.next_data < lay.subs {
                    let s = sender.next_data;
                    let (a, b) = lay.sub_range(s);
                    for pkt in sender.data[s].send_continue(0, message.slice(a..b))? {
                        transmit(&mut data_link, pkt, now, rng, &mut q, &mut tracer, "data")?;
                    }
                    sender.data_injected += lay.data_chunks_in(s) as u64;
                    sender.next_data += 1;
                } else if sender.next_parity < lay.subs {
                    q.schedule(sender.parity_ready[sender.next_parity], Ev::Pump)?;
                    continue;
                } else {
                    continue;
                }
                q.schedule(data_link.busy_until().max(now), Ev::Pump)?;
            }
            Ev::Data(pkt) => {
                recv.activity = true;
                let imm = TransportImmediate::decode(pkt.immediate, cfg.qp.imm_split);
                match recv.rx.on_packet(&pkt) {
                    Arrival::Accepted { chunk_completed, .. } => {
                        if let Some(c) = chunk_completed {
                            tracer.log(now, "chunk", Some(&pkt), || {
                                let s = recv.owner.get(&imm.msg_id).copied().unwrap_or(0);
                                format!("submessage {s} chunk {c} bit set")
                            });
                            if !recv.fto_armed {
                                recv.fto_armed = true;
                                q.schedule(now + timers.fto, Ev::Fto)?;
                                tracer.log(now, "fto_arm", None, || format!("fto {:?}", timers.fto));
                            }
                        }
                    }
                    Arrival::Discarded { reason, .. } => {
                        tracer.log(now, "discard", Some(&pkt), || crate::sr::discard_label(reason).to_string());
                    }
                }
            }
            Ev::Poll => {
                let activity = std::mem::take(&mut recv.activity);
                match recv.phase {
                    Phase::Coded if activity => {
                        let mut all = true;
                        for s in 0..lay.subs {
                            if !recv.decodable(&cfg.ec, &lay, s)? {
                                all = false;
                                break;
                            }
                        }
                        if all {
                            let latency = finish_all(&mut recv, &cfg.ec, &lay, cfg.decode_ns_per_byte)?;
                            q.schedule(now + latency, Ev::Emit(EcCtrl::Ack))?;
                            recv.phase = Phase::Done;
                        }
                    }
                    Phase::Fallback => {
                        let mut latency = Duration::ZERO;
                        for s in 0..lay.subs {
                            if recv.done[s].is_some() {
                                continue;
                            }
                            if recv.decodable(&cfg.ec, &lay, s)? {
                                let bytes = recv.finish(&cfg.ec, &lay, s)?;
                                latency += duration_from_secs(bytes as f64 * cfg.decode_ns_per_byte * 1e-9);
                            } else if activity {
                                let ack = SrAck::from_bitmap(recv.rx.bitmap(recv.data[s])?, window);
                                q.schedule(now, Ev::Emit(EcCtrl::SubAck { submessage: s as u32, ack }))?;
                            }
                        }
                        if recv.done.iter().all(Option::is_some) {
                            recv.phase = Phase::Done;
                            q.schedule(now + latency, Ev::Emit(EcCtrl::Ack))?;
                        }
                    }
                    Phase::Done if activity => {
                        // late packets after completion: repeat the ACK
                        q.schedule(now, Ev::Emit(EcCtrl::Ack))?;
                    }
                    _ => {}
                }
                q.schedule_after(cfg.sr.ack_poll_period, Ev::Poll);
            }
            Ev::Fto => {
                if recv.phase != Phase::Coded {
                    continue;
                }
                let mut failed = Vec::new();
                for s in 0..lay.subs {
                    if !recv.decodable(&cfg.ec, &lay, s)? {
                        failed.push(s as u32);
                    }
                }
                if failed.is_empty() {
                    let latency = finish_all(&mut recv, &cfg.ec, &lay, cfg.decode_ns_per_byte)?;
                    recv.phase = Phase::Done;
                    q.schedule(now + latency, Ev::Emit(EcCtrl::Ack))?;
                } else {
                    // decodable submessages complete now; the rest fall back
                    for s in 0..lay.subs {
                        if !failed.contains(&(s as u32)) {
                            recv.finish(&cfg.ec, &lay, s)?;
                        }
                    }
                    recv.phase = Phase::Fallback;
                    recv.nacked = Some(failed.clone());
                    q.schedule(now, Ev::Emit(EcCtrl::Nack(failed)))?;
                }
            }
            Ev::Emit(msg) => {
                tracer.log(now, "ctrl_tx", None, || ctrl_label(&msg));
                if let Some(at) = ctrl_link.transmit(msg.wire_len(), now, rng).arrival {
                    q.schedule(at, Ev::Ctrl(msg))?;
                } else {
                    tracer.log(now, "ctrl_drop", None, || ctrl_label(&msg));
                }
            }
            Ev::Ctrl(msg) => {
                tracer.log(now, "ctrl_rx", None, || ctrl_label(&msg));
                match msg {
                    EcCtrl::Ack => {
                        for stream in &mut sender.data {
                            stream.send_end()?;
                        }
                        break now;
                    }
                    EcCtrl::Nack(failed) => {
                        let wire = encode_nack(&failed);
                        let failed = decode_nack(&wire)?;
                        for s in failed.into_iter().map(|s| s as usize) {
                            if s >= lay.subs || sender.fallback.contains_key(&s) {
                                continue;
                            }
                            let n = lay.data_chunks_in(s);
                            sender.fallback.insert(s, RetransmitQueue::new(n));
                            for c in 0..n {
                                reinject(&mut sender, &lay, &message, s, c, &mut data_link, rng, &mut q, &mut tracer, cfg.sr.rto)?;
                            }
                        }
                    }
                    EcCtrl::SubAck { submessage, ack } => {
                        if let Some(queue) = sender.fallback.get_mut(&(submessage as usize)) {
                            for (_, timer) in queue.on_ack(&ack) {
                                if let Some(id) = timer {
                                    q.cancel(id);
                                }
                            }
                        }
                    }
                }
            }
            Ev::Rto(s, c) => {
                let Some(queue) = sender.fallback.get_mut(&s) else { continue };
                queue.disarm(c);
                if !queue.is_acked(c) {
                    tracer.log(now, "rto", None, || format!("submessage {s} chunk {c}"));
                    reinject(&mut sender, &lay, &message, s, c, &mut data_link, rng, &mut q, &mut tracer, cfg.sr.rto)?;
                }
            }
        }
    };

    let delivered: Vec<u8> = recv.done.iter().flat_map(|d| d.as_ref().expect("all submessages done").iter().copied()).collect();
    Ok(EcReport {
        completion: completion.saturating_since(SimTime::ZERO),
        delivered,
        timers,
        data_chunks,
        submessages: lay.subs,
        data_chunks_injected: sender.data_injected,
        parity_chunks_injected: sender.parity_injected,
        retransmitted_chunks: sender.retransmitted,
        nacked: recv.nacked,
        decoded_submessages: recv.decoded,
        packets_sent: data_link.transmitted(),
        packets_dropped: data_link.dropped(),
        trace: tracer.records,
    })
}

fn finish_all(recv: &mut Receiver, cfg: &EcConfig, lay: &Layout, decode_ns_per_byte: f64) -> Result<Duration, EcProtocolError> {
    let mut bytes = 0;
    for s in 0..lay.subs {
        if recv.done[s].is_none() {
            bytes += recv.finish(cfg, lay, s)?;
        }
    }
    Ok(duration_from_secs(bytes as f64 * decode_ns_per_byte * 1e-9))
}

fn transmit(
    link: &mut Link,
    pkt: Packet,
    now: SimTime,
    rng: &mut SimRng,
    q: &mut EventQueue<Ev>,
    tracer: &mut Tracer,
    kind: &'static str,
) -> Result<SimTime, EcProtocolError> {
    let out = link.transmit(pkt.payload_len(), now, rng);
    match out.arrival {
        Some(at) => {
            tracer.log(out.injected_at, "inject", Some(&pkt), || kind.to_string());
            q.schedule(at, Ev::Data(pkt))?;
        }
        None => tracer.log(out.injected_at, "drop", Some(&pkt), || format!("{kind} lost")),
    }
    Ok(out.injected_at)
}

#[allow(clippy::too_many_arguments)]
fn reinject(
    sender: &mut Sender,
    lay: &Layout,
    message: &Bytes,
    s: usize,
    c: usize,
    link: &mut Link,
    rng: &mut SimRng,
    q: &mut EventQueue<Ev>,
    tracer: &mut Tracer,
    rto: Duration,
) -> Result<(), EcProtocolError> {
    let now = q.now();
    let (a, b) = lay.sub_range(s);
    let start = c * lay.chunk_bytes;
    let end = (start + lay.chunk_bytes).min(b - a);
    let packets = sender.data[s].send_continue(start as u64, message.slice(a + start..a + end))?;
    let mut done = now;
    for pkt in packets {
        done = transmit(link, pkt, now, rng, q, tracer, "retransmit")?;
    }
    sender.retransmitted += 1;
    let timer = q.schedule(done + rto, Ev::Rto(s, c))?;
    sender.fallback.get_mut(&s).expect("queue exists").arm(c, timer);
    Ok(())
}

fn ctrl_label(msg: &EcCtrl) -> String {
    match msg {
        EcCtrl::Ack => "ack".into(),
        EcCtrl::Nack(list) => format!("nack {list:?}"),
        EcCtrl::SubAck { submessage, ack } => {
            format!("submessage {submessage} {}", crate::sr::ack_label(ack))
        }
    }
}
