use bytes::{Buf, BufMut, Bytes, BytesMut};

use super::SrError;
use crate::sdr::Bitmap;

/// Acknowledgement: every chunk up to `cumulative` has arrived (`-1` when
/// chunk 0 is missing), and bit `j` of `selective` reports chunk
/// `cumulative + 1 + j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SrAck {
    pub cumulative: i32,
    pub selective: Vec<u8>,
}

impl SrAck {
    /// Snapshot of a receiver chunk bitmap.
    pub fn from_bitmap(bitmap: &Bitmap, window_bytes: usize) -> Self {
        let cumulative = bitmap.leading_ones() as i32 - 1;
        let mut selective = vec![0u8; window_bytes];
        let first = (cumulative + 1) as usize;
        for j in 0..window_bytes * 8 {
            let c = first + j;
            if c >= bitmap.len() {
                break;
            }
            if bitmap.get(c) {
                selective[j / 8] |= 1 << (j % 8);
            }
        }
        SrAck {
            cumulative,
            selective,
        }
    }

    pub fn covers(&self, chunk: usize) -> bool {
        let c = chunk as i64;
        let cum = self.cumulative as i64;
        if c <= cum {
            return true;
        }
        let j = (c - cum - 1) as usize;
        j < self.selective.len() * 8 && self.selective[j / 8] >> (j % 8) & 1 == 1
    }

    /// Every chunk index this ACK reports as received, ascending.
    pub fn acked(&self) -> impl Iterator<Item = usize> + '_ {
        let first = (self.cumulative + 1) as usize;
        (0..first).chain(
            (0..self.selective.len() * 8)
                .filter(|j| self.selective[j / 8] >> (j % 8) & 1 == 1)
                .map(move |j| first + j),
        )
    }

    /// Wire form: 32-bit big-endian two's-complement cumulative, then the
    /// selective window bytes.
    pub fn encode(&self) -> Bytes {
        let mut b = BytesMut::with_capacity(4 + self.selective.len());
        b.put_i32(self.cumulative);
        b.put_slice(&self.selective);
        b.freeze()
    }

    pub fn decode(mut wire: &[u8], window_bytes: usize) -> Result<Self, SrError> {
        if wire.len() != 4 + window_bytes {
            return Err(SrError::MalformedAck(format!(
                "expected {} bytes, got {}",
                4 + window_bytes,
                wire.len()
            )));
        }
        let cumulative = wire.get_i32();
        if cumulative < -1 {
            return Err(SrError::MalformedAck(format!("cumulative {cumulative}")));
        }
        Ok(SrAck {
            cumulative,
            selective: wire.to_vec(),
        })
    }
}
