//! Erasure-coded reliability: XOR and systematic Cauchy (MDS) codecs, and the
//! submessage protocol with timeout-driven fallback to Selective Repeat.

mod codec;
mod gf256;
mod protocol;

pub use codec::{decodable, ec_decode, ec_encode, EcConfig};
pub use protocol::{decode_nack, ec_send, encode_nack, EcCtrl, EcProtocolError, EcReport, EcSimConfig, FallbackTimers};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Erasure code family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Code {
    /// Parity `i` is the XOR of data chunks `j` with `j mod m == i`.
    Xor,
    /// Systematic Reed-Solomon style code with a Cauchy generator.
    Mds,
}

impl std::fmt::Display for Code {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Code::Xor => "xor",
            Code::Mds => "mds",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EcError {
    #[error("invalid code parameters: {0}")]
    BadParams(String),
    #[error("block {index} has length {len}, expected {expected}")]
    BlockLength {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("block index {0} is duplicated or out of range")]
    BadIndex(usize),
    #[error("too many erasures to reconstruct the data")]
    Undecodable,
}
