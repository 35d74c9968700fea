//! Closed-form completion-time and recovery-probability models.
//!
//! All durations are `f64` seconds (any consistent unit works; the examples
//! in the tests use unitless time). Drop probabilities are per chunk; use
//! [`chunk_drop_prob`] to convert from a per-packet rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ec::Code;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParam {
        field,
        reason: reason.into(),
    }
}

/// Injection time of one chunk.
pub fn t_inj(chunk_bytes: f64, bandwidth_bits_per_sec: f64) -> Result<f64, ModelError> {
    if !(bandwidth_bits_per_sec > 0.0 && bandwidth_bits_per_sec.is_finite()) {
        return Err(invalid("bandwidth", "must be positive"));
    }
    if !(chunk_bytes > 0.0) {
        return Err(invalid("chunk_bytes", "must be positive"));
    }
    Ok(chunk_bytes * 8.0 / bandwidth_bits_per_sec)
}

/// Probability that a chunk of `packets_per_chunk` packets loses at least one.
pub fn chunk_drop_prob(p_drop_packet: f64, packets_per_chunk: u32) -> f64 {
    -((-p_drop_packet).ln_1p() * packets_per_chunk as f64).exp_m1()
}

/// `RTT + alpha * RTT`.
pub fn rto(rtt: f64, alpha: f64) -> f64 {
    rtt * (1.0 + alpha)
}

/// Selective Repeat model: `m` chunks, chunk `i` (1-indexed) finishes its
/// first injection at `i * t_inj`, and every drop costs `rto + t_inj`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrModelParams {
    pub m: u64,
    pub t_inj: f64,
    pub rtt: f64,
    pub rto: f64,
    pub p_drop: f64,
}

impl SrModelParams {
    /// Per-drop overhead `O = rto + t_inj`.
    pub fn overhead(&self) -> f64 {
        self.rto + self.t_inj
    }

    pub fn t_start(&self, i: u64) -> f64 {
        i as f64 * self.t_inj
    }

    /// The model is exact only while the whole message is injected before the
    /// first retransmission can fire.
    pub fn is_exact_regime(&self) -> bool {
        self.t_start(self.m) <= self.rto
    }

    pub fn with_chunks(self, m: u64) -> Self {
        SrModelParams { m, ..self }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.t_inj >= 0.0 && self.t_inj.is_finite()) {
            return Err(invalid("t_inj", "must be finite and non-negative"));
        }
        if !(self.rtt >= 0.0 && self.rtt.is_finite()) {
            return Err(invalid("rtt", "must be finite and non-negative"));
        }
        if !(self.rto >= 0.0 && self.rto.is_finite()) {
            return Err(invalid("rto", "must be finite and non-negative"));
        }
        if !(self.overhead() > 0.0) {
            return Err(invalid("rto", "rto + t_inj must be positive"));
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(invalid("p_drop", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Expected SR completion time. `lower_bound` is set when the message is long
/// enough that retransmissions queue behind first injections, which the model
/// ignores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrEstimate {
    pub value: f64,
    pub lower_bound: bool,
}

const TAIL_CUTOFF: f64 = 1e-12;

/// Expected SR completion time `E[max_i X_i] + rtt` where
/// `X_i = t_start(i) + O (Y_i - 1)` and `Y_i` is geometric.
pub fn e_t_sr_analytical(params: &SrModelParams) -> Result<SrEstimate, ModelError> {
    e_t_sr_with_cutoff(params, TAIL_CUTOFF)
}

/// [`e_t_sr_analytical`] with an explicit survival cutoff for the tail sum.
pub fn e_t_sr_with_cutoff(params: &SrModelParams, cutoff: f64) -> Result<SrEstimate, ModelError> {
    params.validate()?;
    if params.m == 0 {
        return Ok(SrEstimate {
            value: 0.0,
            lower_bound: false,
        });
    }
    Ok(SrEstimate {
        value: params.t_start(params.m) + tail_integral(params, cutoff) + params.rtt,
        lower_bound: !params.is_exact_regime(),
    })
}

/// `∫_0^∞ P(max X > t_M + s) ds`.
///
/// For `s ≥ 0` every chunk has started, and `P(X_i > t_M + s) = p^e_i(s)` with
/// `e_i(s) = floor((d_i + s) / O) + 1`, `d_i = t_M - t_start(i)`. Each exponent
/// steps up by one at `s = φ_i + jO`, `φ_i = O - (d_i mod O)`, so the survival
/// function is piecewise constant and the integral is an exact sum over the
/// merged breakpoints. Exponents large enough that `p^e` is negligible are
/// dropped from the product.
fn tail_integral(params: &SrModelParams, cutoff: f64) -> f64 {
    let p = params.p_drop;
    if p == 0.0 {
        return 0.0;
    }
    let o = params.overhead();
    let ln_p = p.ln();
    // p^e below this no longer changes ln(1 - p^e) at double precision
    // relative to the cutoff-sized survival it feeds into
    let e_cap = ((1e-40f64).ln() / ln_p).ceil().max(1.0) as u64;

    let t_m = params.t_start(params.m);
    // (phase, initial exponent) of chunks that still matter
    let mut chunks: Vec<(f64, u64)> = Vec::new();
    for i in (1..=params.m).rev() {
        let d = t_m - params.t_start(i);
        let periods = (d / o).floor();
        let e0 = periods as u64 + 1;
        if e0 > e_cap {
            // chunks further back only have larger exponents
            break;
        }
        let mut phase = o - (d - periods * o);
        if phase <= 0.0 {
            phase = o;
        }
        chunks.push((phase.min(o), e0));
    }
    chunks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut counts = vec![0u64; e_cap as usize + 2];
    for &(_, e) in &chunks {
        counts[e as usize] += 1;
    }
    let term = |e: usize| -> f64 {
        if e as u64 > e_cap {
            0.0
        } else {
            (-(ln_p * e as f64).exp()).ln_1p()
        }
    };
    let log_cdf = |counts: &[u64]| -> f64 {
        counts
            .iter()
            .enumerate()
            .filter(|(_, n)| **n > 0)
            .map(|(e, n)| *n as f64 * term(e))
            .sum()
    };

    let mut ln_f = log_cdf(&counts);
    let mut survival = -ln_f.exp_m1();
    let mut integral = 0.0;
    let mut s_prev = 0.0;
    let mut period = 0u64;
    while survival >= cutoff {
        let base = period as f64 * o;
        let mut idx = 0;
        while idx < chunks.len() {
            let phase = chunks[idx].0;
            let s = base + phase;
            integral += survival * (s - s_prev);
            s_prev = s;
            // apply every breakpoint sharing this phase
            while idx < chunks.len() && chunks[idx].0 == phase {
                let e = (chunks[idx].1 + period) as usize;
                if e <= e_cap as usize {
                    counts[e] -= 1;
                    counts[e + 1] += 1;
                    ln_f += term(e + 1) - term(e);
                }
                idx += 1;
            }
            survival = -ln_f.exp_m1();
            if survival < cutoff {
                break;
            }
        }
        // cancel accumulated rounding once per period
        ln_f = log_cdf(&counts);
        survival = -ln_f.exp_m1();
        period += 1;
    }
    integral
}

/// Probability that an MDS-coded submessage of `k + m` chunks is recoverable
/// (at most `m` erasures).
pub fn p_ec_mds(k: u64, m: u64, p_drop: f64) -> f64 {
    let n = k + m;
    if p_drop <= 0.0 {
        return 1.0;
    }
    if p_drop >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - p_drop;
    let sum: f64 = if n <= 64 {
        let mut binom = 1.0f64;
        let mut acc = 0.0;
        for i in 0..=m.min(n) {
            if i > 0 {
                binom = binom * (n - i + 1) as f64 / i as f64;
            }
            acc += binom * p_drop.powi(i as i32) * q.powi((n - i) as i32);
        }
        acc
    } else {
        let (lp, lq) = (p_drop.ln(), (-p_drop).ln_1p());
        let mut ln_binom = 0.0f64;
        let mut acc = 0.0;
        for i in 0..=m.min(n) {
            if i > 0 {
                ln_binom += ((n - i + 1) as f64).ln() - (i as f64).ln();
            }
            acc += (ln_binom + i as f64 * lp + (n - i) as f64 * lq).exp();
        }
        acc
    };
    sum.clamp(0.0, 1.0)
}

/// Probability that an XOR-coded submessage is recoverable: each of the `m`
/// groups of `n = k/m + 1` chunks loses at most one.
pub fn p_ec_xor(k: u64, m: u64, p_drop: f64) -> Result<f64, ModelError> {
    if m == 0 || k % m != 0 {
        return Err(invalid("m", format!("must divide k (k={k}, m={m})")));
    }
    let n = (k / m + 1) as i32;
    let q = 1.0 - p_drop;
    let group = q.powi(n) + n as f64 * p_drop * q.powi(n - 1);
    Ok(group.powi(m as i32).clamp(0.0, 1.0))
}

pub fn p_ec(code: Code, k: u64, m: u64, p_drop: f64) -> Result<f64, ModelError> {
    match code {
        Code::Mds => Ok(p_ec_mds(k, m, p_drop)),
        Code::Xor => p_ec_xor(k, m, p_drop),
    }
}

/// Erasure-coded transfer of `msg_chunks` data chunks in submessages of `k`
/// data and `m` parity chunks. A final partial submessage is padded for
/// coding, so it still carries `m` parity chunks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcModelParams {
    pub msg_chunks: u64,
    pub k: u64,
    pub m: u64,
    pub code: Code,
    pub p_drop: f64,
    pub beta: f64,
    pub rtt: f64,
    pub t_inj: f64,
}

impl EcModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k == 0 || self.m == 0 {
            return Err(invalid("k", "k and m must be at least 1"));
        }
        if self.code == Code::Xor && self.k % self.m != 0 {
            return Err(invalid("m", "XOR requires m to divide k"));
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(invalid("p_drop", "must lie in [0, 1)"));
        }
        if !(self.beta >= 0.0 && self.rtt >= 0.0 && self.t_inj >= 0.0) {
            return Err(invalid("beta", "beta, rtt and t_inj must be non-negative"));
        }
        Ok(())
    }

    /// Number of data submessages `L`.
    pub fn submessages(&self) -> u64 {
        self.msg_chunks.div_ceil(self.k)
    }

    pub fn parity_chunks(&self) -> u64 {
        self.submessages() * self.m
    }

    /// Lossless injection time of all data and parity chunks.
    pub fn base_time(&self) -> f64 {
        (self.msg_chunks + self.parity_chunks()) as f64 * self.t_inj
    }

    /// Fallback timeout `base + beta * rtt`.
    pub fn fto(&self) -> f64 {
        self.base_time() + self.beta * self.rtt
    }

    pub fn global_timeout(&self) -> f64 {
        4.0 * self.fto() + 4.0 * self.rtt
    }

    pub fn p_submessage(&self) -> Result<f64, ModelError> {
        p_ec(self.code, self.k, self.m, self.p_drop)
    }

    /// Expected number of failed submessages `L (1 - P_EC)`.
    pub fn expected_failures(&self) -> Result<f64, ModelError> {
        Ok(self.submessages() as f64 * (1.0 - self.p_submessage()?))
    }

    /// Probability that at least one submessage needs the fallback.
    pub fn p_fallback(&self) -> Result<f64, ModelError> {
        let p = self.p_submessage()?;
        Ok(-(self.submessages() as f64 * p.ln()).exp_m1())
    }
}

/// Lower bound on the expected EC completion time: base injection, plus the
/// expected timeout and NACK cost, plus SR over the expected failed chunks
/// (rounded up to whole chunks).
pub fn e_t_ec_lower(ec: &EcModelParams, sr: &SrModelParams) -> Result<f64, ModelError> {
    ec.validate()?;
    let failures = ec.expected_failures()?;
    let sr_chunks = (failures * ec.k as f64).ceil() as u64;
    let retransmit = e_t_sr_analytical(&sr.with_chunks(sr_chunks))?.value;
    Ok(ec.base_time() + ec.p_fallback()? * (ec.rtt + ec.beta * ec.rtt) + retransmit)
}

/// Ring Allreduce: `n` participants, lossless per-step cost `c` and expected
/// per-step reliability delay `mu_x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllreduceParams {
    pub n: u64,
    pub c: f64,
    pub mu_x: f64,
}

pub fn allreduce_lower_bound(params: &AllreduceParams) -> Result<f64, ModelError> {
    if params.n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if !(params.c >= 0.0 && params.mu_x >= 0.0) {
        return Err(invalid("c", "c and mu_x must be non-negative"));
    }
    Ok((2 * params.n - 2) as f64 * (params.c + params.mu_x))
}
