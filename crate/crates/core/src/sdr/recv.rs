use super::send::Cts;
use super::{Bitmap, QpConfig, SdrError, TransportImmediate};
use crate::simnet::Packet;

/// Token for a posted receive: its message slot and the slot generation at
/// post time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RecvHandle {
    pub msg_id: u32,
    pub generation: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscardReason {
    /// Slot not posted: payload went to the NULL key.
    Nulled,
    /// Packet generation differs from the slot's current generation.
    StaleGeneration,
    /// Offset or length outside the posted buffer.
    OutOfRange,
}

/// What happened to an arriving packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arrival {
    Accepted {
        msg_id: u32,
        packet_index: u64,
        /// Chunk whose bit this packet completed, if any.
        chunk_completed: Option<usize>,
        duplicate: bool,
    },
    Discarded {
        msg_id: u32,
        reason: DiscardReason,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RecvStats {
    pub accepted: u64,
    pub duplicates: u64,
    pub discarded_nulled: u64,
    pub discarded_generation: u64,
    pub discarded_out_of_range: u64,
}

impl RecvStats {
    pub fn discarded(&self) -> u64 {
        self.discarded_nulled + self.discarded_generation + self.discarded_out_of_range
    }
}

/// Receive-side state of one posted message.
#[derive(Debug)]
struct MessageDescriptor {
    generation: u32,
    total_packets: u64,
    packet_bitmap: Bitmap,
    chunk_bitmap: Bitmap,
    /// Received packets per chunk; a chunk bit is set when this reaches the
    /// chunk's packet count.
    chunk_fill: Vec<u32>,
    user_imm_expected: bool,
    frag_mask: u32,
    user_imm: u32,
    buffer: Vec<u8>,
}

#[derive(Debug)]
enum Slot {
    /// No live receive; packets are discarded (NULL key).
    Nulled { generation: u32 },
    Posted(Box<MessageDescriptor>),
}

impl Slot {
    fn generation(&self) -> u32 {
        match self {
            Slot::Nulled { generation } => *generation,
            Slot::Posted(d) => d.generation,
        }
    }
}

/// A completed receive, detached from its (now recycled) slot.
#[derive(Debug, Clone)]
pub struct CompletedRecv {
    pub handle: RecvHandle,
    pub buffer: Vec<u8>,
    pub chunk_bitmap: Bitmap,
    pub user_imm: Option<u32>,
}

/// Receive side of an SDR queue pair: the message table and its bitmaps.
#[derive(Debug)]
pub struct RecvQp {
    cfg: QpConfig,
    slots: Vec<Slot>,
    posts: u64,
    stats: RecvStats,
}

impl RecvQp {
    pub fn new(cfg: QpConfig) -> Result<Self, SdrError> {
        cfg.validate()?;
        let slots = (0..cfg.max_inflight_msgs())
            .map(|_| Slot::Nulled { generation: 0 })
            .collect();
        Ok(RecvQp {
            cfg,
            slots,
            posts: 0,
            stats: RecvStats::default(),
        })
    }

    pub fn config(&self) -> &QpConfig {
        &self.cfg
    }

    pub fn stats(&self) -> RecvStats {
        self.stats
    }

    /// Number of currently posted receives.
    pub fn posted(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| matches!(s, Slot::Posted(_)))
            .count()
    }

    /// Posts `buffer` into the next message slot in order. The returned
    /// [`Cts`] must be delivered to the sender before it can send into it.
    pub fn post(
        &mut self,
        buffer: Vec<u8>,
        user_imm_expected: bool,
    ) -> Result<(RecvHandle, Cts), SdrError> {
        let len = buffer.len() as u64;
        if len == 0 || len > self.cfg.max_msg_size_bytes {
            return Err(SdrError::MessageTooLarge {
                len,
                max: self.cfg.max_msg_size_bytes,
            });
        }
        let msg_id = (self.posts % self.slots.len() as u64) as u32;
        let slot = &mut self.slots[msg_id as usize];
        let generation = match slot {
            Slot::Posted(_) => return Err(SdrError::Backpressure { msg_id }),
            Slot::Nulled { generation } => *generation,
        };
        let total_packets = self.cfg.packets_for(len);
        let chunks = self.cfg.chunks_for(len);
        *slot = Slot::Posted(Box::new(MessageDescriptor {
            generation,
            total_packets,
            packet_bitmap: Bitmap::new(total_packets as usize),
            chunk_bitmap: Bitmap::new(chunks),
            chunk_fill: vec![0; chunks],
            user_imm_expected,
            frag_mask: 0,
            user_imm: 0,
            buffer,
        }));
        self.posts += 1;
        let handle = RecvHandle { msg_id, generation };
        let cts = Cts {
            msg_id,
            generation,
            buffer_len: len,
            user_imm: user_imm_expected,
        };
        Ok((handle, cts))
    }

    fn chunk_len(&self, total_packets: u64, chunk: usize) -> u32 {
        let cs = self.cfg.chunk_size_packets as u64;
        let start = chunk as u64 * cs;
        (total_packets.min(start + cs) - start) as u32
    }

    /// Backend processing of one packet completion.
    pub fn on_packet(&mut self, pkt: &Packet) -> Arrival {
        let split = self.cfg.imm_split;
        let imm = TransportImmediate::decode(pkt.immediate, split);
        let msg_id = imm.msg_id;
        let generations = self.cfg.generations;
        let discard = |stats: &mut RecvStats, reason| {
            match reason {
                DiscardReason::Nulled => stats.discarded_nulled += 1,
                DiscardReason::StaleGeneration => stats.discarded_generation += 1,
                DiscardReason::OutOfRange => stats.discarded_out_of_range += 1,
            }
            Arrival::Discarded { msg_id, reason }
        };

        let slot_gen = self.slots[msg_id as usize].generation();
        if pkt.generation != slot_gen % generations {
            return discard(&mut self.stats, DiscardReason::StaleGeneration);
        }
        let total_packets = match &self.slots[msg_id as usize] {
            Slot::Nulled { .. } => return discard(&mut self.stats, DiscardReason::Nulled),
            Slot::Posted(d) => d.total_packets,
        };

        let index = imm.packet_offset as u64;
        let base = self.cfg.root_offset(msg_id, 0);
        let expected_at = self.cfg.root_offset(msg_id, index);
        if index >= total_packets || pkt.dest_offset_bytes != expected_at {
            return discard(&mut self.stats, DiscardReason::OutOfRange);
        }
        let start = (pkt.dest_offset_bytes - base) as usize;
        let cs = self.cfg.chunk_size_packets;
        let chunk = index as usize / cs;
        let chunk_len = self.chunk_len(total_packets, chunk);
        let fragments = split.fragments_per_imm();

        let Slot::Posted(desc) = &mut self.slots[msg_id as usize] else {
            unreachable!()
        };
        let end = start + pkt.payload.len();
        if end > desc.buffer.len() {
            return discard(&mut self.stats, DiscardReason::OutOfRange);
        }
        desc.buffer[start..end].copy_from_slice(&pkt.payload);

        if desc.user_imm_expected && index < fragments as u64 {
            desc.user_imm |= imm.imm_frag << (split.frag_bits as u32 * index as u32);
            desc.frag_mask |= 1 << index;
        }

        self.stats.accepted += 1;
        let fresh = desc.packet_bitmap.set(index as usize);
        let mut chunk_completed = None;
        if fresh {
            desc.chunk_fill[chunk] += 1;
            if desc.chunk_fill[chunk] == chunk_len {
                desc.chunk_bitmap.set(chunk);
                chunk_completed = Some(chunk);
            }
        } else {
            self.stats.duplicates += 1;
        }
        Arrival::Accepted {
            msg_id,
            packet_index: index,
            chunk_completed,
            duplicate: !fresh,
        }
    }

    fn descriptor(&self, h: RecvHandle) -> Result<&MessageDescriptor, SdrError> {
        match self.slots.get(h.msg_id as usize) {
            Some(Slot::Posted(d)) if d.generation == h.generation => Ok(d),
            _ => Err(SdrError::NotPosted),
        }
    }

    /// Read view of the chunk bitmap of a posted receive.
    pub fn bitmap(&self, h: RecvHandle) -> Result<&Bitmap, SdrError> {
        self.descriptor(h).map(|d| &d.chunk_bitmap)
    }

    /// Posted receive buffer (partially filled).
    pub fn buffer(&self, h: RecvHandle) -> Result<&[u8], SdrError> {
        self.descriptor(h).map(|d| d.buffer.as_slice())
    }

    /// Mutable buffer access for in-place recovery by a reliability layer.
    pub fn buffer_mut(&mut self, h: RecvHandle) -> Result<&mut [u8], SdrError> {
        match self.slots.get_mut(h.msg_id as usize) {
            Some(Slot::Posted(d)) if d.generation == h.generation => Ok(&mut d.buffer),
            _ => Err(SdrError::NotPosted),
        }
    }

    /// The 32-bit user immediate once all its fragments have arrived.
    pub fn imm(&self, h: RecvHandle) -> Result<Option<u32>, SdrError> {
        let d = self.descriptor(h)?;
        self.rebuilt_imm(d)
    }

    fn rebuilt_imm(&self, d: &MessageDescriptor) -> Result<Option<u32>, SdrError> {
        if !d.user_imm_expected {
            return Err(SdrError::NoImmediate);
        }
        let n = self.cfg.imm_split.fragments_per_imm();
        let full = if n >= 32 { u32::MAX } else { (1u32 << n) - 1 };
        Ok((n > 0 && d.frag_mask == full).then_some(d.user_imm))
    }

    /// Completes a posted receive. The slot is NULLed and its generation
    /// advanced, so packets still in flight for it are discarded.
    pub fn complete(&mut self, h: RecvHandle) -> Result<CompletedRecv, SdrError> {
        self.descriptor(h)?;
        let slot = &mut self.slots[h.msg_id as usize];
        let next = Slot::Nulled {
            generation: h.generation.wrapping_add(1),
        };
        let Slot::Posted(d) = std::mem::replace(slot, next) else {
            unreachable!()
        };
        let user_imm = if d.user_imm_expected {
            self.rebuilt_imm(&d)?
        } else {
            None
        };
        Ok(CompletedRecv {
            handle: h,
            buffer: d.buffer,
            chunk_bitmap: d.chunk_bitmap,
            user_imm,
        })
    }

    /// Backend per-packet bitmap. Diagnostic access only; reliability layers
    /// see chunk bitmaps exclusively.
    pub fn backend_packet_bitmap(&self, h: RecvHandle) -> Result<&Bitmap, SdrError> {
        self.descriptor(h).map(|d| &d.packet_bitmap)
    }

    /// Checks on every posted descriptor that each chunk bit equals the AND
    /// of its packet bits.
    pub fn coalescing_holds(&self) -> bool {
        let cs = self.cfg.chunk_size_packets;
        self.slots.iter().all(|slot| match slot {
            Slot::Nulled { .. } => true,
            Slot::Posted(d) => (0..d.chunk_bitmap.len()).all(|c| {
                let end = ((c + 1) * cs).min(d.total_packets as usize);
                let all = (c * cs..end).all(|p| d.packet_bitmap.get(p));
                all == d.chunk_bitmap.get(c)
            }),
        })
    }
}
