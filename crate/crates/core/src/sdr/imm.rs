use serde::{Deserialize, Serialize};

use super::SdrError;

/// Bit widths of the three transport-immediate fields, high to low:
/// message ID, packet offset, user-immediate fragment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "(u8, u8, u8)", into = "(u8, u8, u8)")]
pub struct ImmSplit {
    pub msg_id_bits: u8,
    pub offset_bits: u8,
    pub frag_bits: u8,
}

impl Default for ImmSplit {
    fn default() -> Self {
        ImmSplit {
            msg_id_bits: 10,
            offset_bits: 18,
            frag_bits: 4,
        }
    }
}

impl ImmSplit {
    pub fn new(msg_id_bits: u8, offset_bits: u8, frag_bits: u8) -> Result<Self, SdrError> {
        let sum = msg_id_bits as u32 + offset_bits as u32 + frag_bits as u32;
        if sum != 32 || msg_id_bits == 0 || offset_bits == 0 {
            return Err(SdrError::BadSplit(msg_id_bits, offset_bits, frag_bits));
        }
        if frag_bits != 0 && 32 % frag_bits != 0 {
            return Err(SdrError::BadSplit(msg_id_bits, offset_bits, frag_bits));
        }
        Ok(ImmSplit {
            msg_id_bits,
            offset_bits,
            frag_bits,
        })
    }

    /// Fragments needed to rebuild a 32-bit user immediate; 0 when the split
    /// leaves no room for fragments.
    pub fn fragments_per_imm(&self) -> u32 {
        if self.frag_bits == 0 {
            0
        } else {
            32 / self.frag_bits as u32
        }
    }

    /// Fragment `index` of a user immediate (bits `[w*index, w*index + w)`).
    pub fn fragment(&self, user_imm: u32, index: u32) -> u32 {
        let w = self.frag_bits as u32;
        (user_imm >> (w * index)) & mask(self.frag_bits)
    }
}

impl TryFrom<(u8, u8, u8)> for ImmSplit {
    type Error = SdrError;

    fn try_from((a, b, c): (u8, u8, u8)) -> Result<Self, SdrError> {
        ImmSplit::new(a, b, c)
    }
}

impl From<ImmSplit> for (u8, u8, u8) {
    fn from(s: ImmSplit) -> Self {
        (s.msg_id_bits, s.offset_bits, s.frag_bits)
    }
}

fn mask(bits: u8) -> u32 {
    if bits >= 32 {
        u32::MAX
    } else {
        (1u32 << bits) - 1
    }
}

/// Decoded 32-bit per-packet transport immediate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TransportImmediate {
    pub msg_id: u32,
    /// Packet offset within the message, in MTU units.
    pub packet_offset: u32,
    pub imm_frag: u32,
}

impl TransportImmediate {
    pub fn encode(&self, split: ImmSplit) -> Result<u32, SdrError> {
        let check = |field, value: u32, bits: u8| {
            if value & !mask(bits) != 0 {
                Err(SdrError::FieldOverflow {
                    field,
                    value: value as u64,
                    bits,
                })
            } else {
                Ok(())
            }
        };
        check("msg_id", self.msg_id, split.msg_id_bits)?;
        check("packet_offset", self.packet_offset, split.offset_bits)?;
        check("imm_frag", self.imm_frag, split.frag_bits)?;
        let low = split.offset_bits as u32 + split.frag_bits as u32;
        Ok((self.msg_id << low)
            | (self.packet_offset << split.frag_bits)
            | self.imm_frag)
    }

    pub fn decode(word: u32, split: ImmSplit) -> Self {
        let low = split.offset_bits as u32 + split.frag_bits as u32;
        TransportImmediate {
            msg_id: (word >> low) & mask(split.msg_id_bits),
            packet_offset: (word >> split.frag_bits) & mask(split.offset_bits),
            imm_frag: word & mask(split.frag_bits),
        }
    }
}
