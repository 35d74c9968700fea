use super::SrAck;
use crate::sdr::Bitmap;

/// Sender-side retransmission queue: one optional timer handle per chunk
/// that has not been acknowledged yet.
#[derive(Debug, Clone)]
pub struct RetransmitQueue<T> {
    acked: Bitmap,
    timers: Vec<Option<T>>,
}

impl<T> RetransmitQueue<T> {
    pub fn new(chunks: usize) -> Self {
        RetransmitQueue {
            acked: Bitmap::new(chunks),
            timers: (0..chunks).map(|_| None).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.timers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timers.is_empty()
    }

    /// Stores the retransmission timer for `chunk`, returning the one it
    /// replaces.
    pub fn arm(&mut self, chunk: usize, timer: T) -> Option<T> {
        debug_assert!(!self.acked.get(chunk), "arming an acknowledged chunk");
        self.timers[chunk].replace(timer)
    }

    /// Forgets the timer of `chunk` (it fired).
    pub fn disarm(&mut self, chunk: usize) -> Option<T> {
        self.timers[chunk].take()
    }

    pub fn is_armed(&self, chunk: usize) -> bool {
        self.timers[chunk].is_some()
    }

    pub fn is_acked(&self, chunk: usize) -> bool {
        self.acked.get(chunk)
    }

    pub fn all_acked(&self) -> bool {
        self.acked.all()
    }

    pub fn outstanding(&self) -> usize {
        self.len() - self.acked.count_ones()
    }

    /// Dequeues every chunk the ACK reports, returning the newly dequeued
    /// chunks with the timers the caller must cancel. Replayed or stale ACKs
    /// dequeue nothing new.
    pub fn on_ack(&mut self, ack: &SrAck) -> Vec<(usize, Option<T>)> {
        let mut out = Vec::new();
        let n = self.timers.len();
        for c in ack.acked().take_while(|c| *c < n) {
            if self.acked.set(c) {
                out.push((c, self.timers[c].take()));
            }
        }
        out
    }
}
