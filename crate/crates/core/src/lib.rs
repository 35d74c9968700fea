//! Simulation and analytical-modeling toolkit for partial-completion RDMA
//! messaging over lossy, high-delay channels.
//!
//! The crate is layered bottom-up:
//!
//! - [`simnet`]: deterministic discrete-event engine and unreliable link.
//! - [`sdr`]: the messaging state machine (packetization, per-packet to
//!   chunk bitmap coalescing, order-based matching, message generations).
//! - [`sr`] and [`ec`]: Selective Repeat and erasure-coded reliability
//!   layers driven over [`simnet`].
//! - [`model`]: closed-form completion-time and recovery-probability models.
//! - [`montecarlo`]: stochastic completion-time samplers and summaries.
//! - [`collectives`]: multi-stage ring Allreduce simulation.

pub mod collectives;
pub mod ec;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod sdr;
pub mod simnet;
pub mod sr;

pub use rng::SimRng;
