use std::collections::VecDeque;

use bytes::Bytes;

use super::{QpConfig, SdrError, TransportImmediate};
use crate::simnet::Packet;

/// Out-of-band clear-to-send: a receive has been posted in this slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cts {
    pub msg_id: u32,
    pub generation: u32,
    pub buffer_len: u64,
    pub user_imm: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SendMode {
    OneShot,
    Streaming,
}

/// Sender-side message context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SendHandle {
    pub msg_id: u32,
    pub generation: u32,
    pub mode: SendMode,
    pub remote_len: u64,
    pub injected_packets: u64,
    pub stream_open: bool,
    user_imm: Option<u32>,
}

/// Send side of an SDR queue pair. Sends are matched to receives strictly in
/// the order the receiver posted them.
#[derive(Debug)]
pub struct SendQp {
    cfg: QpConfig,
    cts: VecDeque<Cts>,
}

impl SendQp {
    pub fn new(cfg: QpConfig) -> Result<Self, SdrError> {
        cfg.validate()?;
        Ok(SendQp {
            cfg,
            cts: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &QpConfig {
        &self.cfg
    }

    pub fn on_cts(&mut self, cts: Cts) {
        self.cts.push_back(cts);
    }

    /// Clear-to-sends received but not yet matched.
    pub fn pending_cts(&self) -> usize {
        self.cts.len()
    }

    fn check_len(&self, len: u64) -> Result<&Cts, SdrError> {
        if len > self.cfg.max_msg_size_bytes {
            return Err(SdrError::MessageTooLarge {
                len,
                max: self.cfg.max_msg_size_bytes,
            });
        }
        let cts = self.cts.front().ok_or(SdrError::NoClearToSend)?;
        if len > cts.buffer_len {
            return Err(SdrError::ExceedsRemoteBuffer {
                len,
                remote: cts.buffer_len,
            });
        }
        Ok(cts)
    }

    fn check_imm(&self, packets: u64, user_imm: Option<u32>) -> Result<(), SdrError> {
        if user_imm.is_some() {
            let needed = self.cfg.imm_split.fragments_per_imm() as u64;
            if needed == 0 || packets < needed {
                return Err(SdrError::ImmediateTooShort {
                    needed: needed.max(1),
                    packets,
                });
            }
        }
        Ok(())
    }

    fn open(&mut self, mode: SendMode, user_imm: Option<u32>) -> SendHandle {
        let cts = self.cts.pop_front().expect("checked by caller");
        SendHandle {
            msg_id: cts.msg_id,
            generation: cts.generation,
            mode,
            remote_len: cts.buffer_len,
            injected_packets: 0,
            stream_open: mode == SendMode::Streaming,
            user_imm,
        }
    }

    /// Starts a one-shot send of `data` into the next matched receive. The
    /// returned iterator yields the message's packets in order; the context
    /// closes when it is exhausted.
    pub fn send_one_shot(
        &mut self,
        data: Bytes,
        user_imm: Option<u32>,
    ) -> Result<OneShotSend, SdrError> {
        let len = data.len() as u64;
        self.check_len(len)?;
        let total = self.cfg.packets_for(len).max(1);
        self.check_imm(total, user_imm)?;
        let handle = self.open(SendMode::OneShot, user_imm);
        Ok(OneShotSend {
            cfg: self.cfg.clone(),
            handle,
            data,
            total,
        })
    }

    /// Opens a streaming send context on the next matched receive.
    pub fn send_stream_start(&mut self, user_imm: Option<u32>) -> Result<StreamSend, SdrError> {
        let remote = self.check_len(0)?.buffer_len;
        self.check_imm(self.cfg.packets_for(remote), user_imm)?;
        let handle = self.open(SendMode::Streaming, user_imm);
        Ok(StreamSend {
            cfg: self.cfg.clone(),
            handle,
        })
    }
}

fn build_packet(cfg: &QpConfig, h: &SendHandle, index: u64, payload: Bytes) -> Packet {
    let split = cfg.imm_split;
    let imm_frag = match h.user_imm {
        Some(v) if index < split.fragments_per_imm() as u64 => split.fragment(v, index as u32),
        _ => 0,
    };
    let immediate = TransportImmediate {
        msg_id: h.msg_id,
        packet_offset: index as u32,
        imm_frag,
    }
    .encode(split)
    .expect("offset bounded by max message size");
    Packet {
        payload,
        immediate,
        dest_offset_bytes: cfg.root_offset(h.msg_id, index),
        channel_qp_index: (index % cfg.num_channels as u64) as u32,
        generation: h.generation % cfg.generations,
    }
}

/// An in-progress one-shot send; iterate to inject its packets.
#[derive(Debug)]
pub struct OneShotSend {
    cfg: QpConfig,
    handle: SendHandle,
    data: Bytes,
    total: u64,
}

impl OneShotSend {
    pub fn handle(&self) -> &SendHandle {
        &self.handle
    }

    pub fn total_packets(&self) -> u64 {
        self.total
    }

    pub fn is_complete(&self) -> bool {
        self.handle.injected_packets == self.total
    }
}

impl Iterator for OneShotSend {
    type Item = Packet;

    fn next(&mut self) -> Option<Packet> {
        let i = self.handle.injected_packets;
        if i == self.total {
            return None;
        }
        let mtu = self.cfg.mtu_bytes;
        let start = (i as usize * mtu).min(self.data.len());
        let end = (start + mtu).min(self.data.len());
        let pkt = build_packet(&self.cfg, &self.handle, i, self.data.slice(start..end));
        self.handle.injected_packets += 1;
        Some(pkt)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.handle.injected_packets) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for OneShotSend {}

/// A streaming send context bound to one remote buffer.
#[derive(Debug)]
pub struct StreamSend {
    cfg: QpConfig,
    handle: SendHandle,
}

impl StreamSend {
    pub fn handle(&self) -> &SendHandle {
        &self.handle
    }

    /// Packets writing `data` at `remote_offset` of the matched buffer.
    pub fn send_continue(&mut self, remote_offset: u64, data: Bytes) -> Result<Vec<Packet>, SdrError> {
        if !self.handle.stream_open {
            return Err(SdrError::StreamClosed);
        }
        let mtu = self.cfg.mtu_bytes as u64;
        if remote_offset % mtu != 0 {
            return Err(SdrError::UnalignedOffset(remote_offset));
        }
        let end = remote_offset + data.len() as u64;
        if end > self.handle.remote_len {
            return Err(SdrError::ExceedsRemoteBuffer {
                len: end,
                remote: self.handle.remote_len,
            });
        }
        let first = remote_offset / mtu;
        let packets: Vec<Packet> = data
            .chunks(mtu as usize)
            .enumerate()
            .map(|(j, part)| {
                let payload = data.slice_ref(part);
                build_packet(&self.cfg, &self.handle, first + j as u64, payload)
            })
            .collect();
        self.handle.injected_packets += packets.len() as u64;
        Ok(packets)
    }

    pub fn send_end(&mut self) -> Result<(), SdrError> {
        if !self.handle.stream_open {
            return Err(SdrError::StreamClosed);
        }
        self.handle.stream_open = false;
        Ok(())
    }
}
