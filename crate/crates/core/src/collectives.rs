//! Ring Allreduce over `N` datacenters: `2N - 2` dependent point-to-point
//! stages whose durations come from a reliability scheme's sampler.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ec::Code;
use crate::model::{chunk_drop_prob, t_inj, EcModelParams, ModelError, SrModelParams};
use crate::sdr::QpConfig;
use crate::simnet::ChannelParams;
use crate::montecarlo::{run_trials, sample_t_ec, sample_t_sr, summarize, CompletionStats};
use crate::rng::substream;
use crate::sr::{variant_rto_secs, SrVariant};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CollectiveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("trials must be at least 1")]
    NoTrials,
}

/// Point-to-point reliability scheme used for every ring stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    Sr { variant: SrVariant },
    /// Erasure coding with Selective Repeat (RTO) as the fallback.
    Ec { k: u64, m: u64, code: Code },
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Sr { variant } => write!(f, "{variant}"),
            Scheme::Ec { k, m, code } => write!(f, "ec_{code}_{k}_{m}"),
        }
    }
}

impl FromStr for Scheme {
    type Err = String;

    /// Parses `sr_rto`, `sr_nack` or `ec_<xor|mds>_<k>_<m>`.
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("unknown scheme `{s}` (expected sr_rto, sr_nack or ec_<xor|mds>_<k>_<m>)");
        match s {
            "sr_rto" => return Ok(Scheme::Sr { variant: SrVariant::Rto }),
            "sr_nack" => return Ok(Scheme::Sr { variant: SrVariant::Nack }),
            _ => {}
        }
        let parts: Vec<&str> = s.split('_').collect();
        let [ "ec", code, k, m ] = parts[..] else {
            return Err(bad());
        };
        let code = match code {
            "xor" => Code::Xor,
            "mds" => Code::Mds,
            _ => return Err(bad()),
        };
        Ok(Scheme::Ec {
            k: k.parse().map_err(|_| bad())?,
            m: m.parse().map_err(|_| bad())?,
            code,
        })
    }
}

/// Channel as the stochastic samplers see it: seconds, with drops drawn per
/// packet and charged per chunk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageChannel {
    pub chunk_t_inj: f64,
    pub rtt: f64,
    pub alpha: f64,
    pub beta: f64,
    pub p_packet: f64,
    pub packets_per_chunk: u32,
}

impl StageChannel {
    /// Chunk injection time from the link bandwidth; `p_packet` from the
    /// channel's drop probability.
    pub fn from_params(channel: &ChannelParams, qp: &QpConfig) -> Result<Self, ModelError> {
        Ok(StageChannel {
            chunk_t_inj: t_inj(qp.chunk_bytes() as f64, channel.bandwidth_bits_per_sec)?,
            rtt: channel.rtt.as_secs_f64(),
            alpha: channel.alpha,
            beta: channel.beta,
            p_packet: channel.p_drop,
            packets_per_chunk: qp.chunk_size_packets as u32,
        })
    }

    pub fn p_chunk(&self) -> f64 {
        chunk_drop_prob(self.p_packet, self.packets_per_chunk)
    }

    pub fn with_p_packet(self, p_packet: f64) -> Self {
        StageChannel { p_packet, ..self }
    }
}

/// Completion-time sampler for one point-to-point transfer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageSampler {
    pub scheme: Scheme,
    pub channel: StageChannel,
}

impl StageSampler {
    pub fn new(scheme: Scheme, channel: StageChannel) -> Result<Self, CollectiveError> {
        let s = StageSampler { scheme, channel };
        s.sr_params(1).validate()?;
        if let Some(ec) = s.ec_params(1) {
            ec.validate()?;
        }
        Ok(s)
    }

    /// Model parameters of an SR transfer (for EC, of its fallback).
    pub fn sr_params(&self, chunks: u64) -> SrModelParams {
        let variant = match self.scheme {
            Scheme::Sr { variant } => variant,
            Scheme::Ec { .. } => SrVariant::Rto,
        };
        let ch = &self.channel;
        SrModelParams {
            m: chunks,
            t_inj: ch.chunk_t_inj,
            rtt: ch.rtt,
            rto: variant_rto_secs(variant, ch.rtt, ch.alpha),
            p_drop: ch.p_chunk(),
        }
    }

    /// Model parameters of an EC transfer; `None` for SR.
    pub fn ec_params(&self, chunks: u64) -> Option<EcModelParams> {
        let Scheme::Ec { k, m, code } = self.scheme else {
            return None;
        };
        let ch = &self.channel;
        Some(EcModelParams {
            msg_chunks: chunks,
            k,
            m,
            code,
            p_drop: ch.p_chunk(),
            beta: ch.beta,
            rtt: ch.rtt,
            t_inj: ch.chunk_t_inj,
        })
    }

    /// One transfer of `chunks` chunks; zero chunks take no time.
    pub fn sample<R: Rng + ?Sized>(&self, chunks: u64, rng: &mut R) -> f64 {
        if chunks == 0 {
            return 0.0;
        }
        let sr = self.sr_params(chunks);
        match self.ec_params(chunks) {
            Some(ec) => sample_t_ec(&ec, &sr, rng).time,
            None => sample_t_sr(&sr, rng),
        }
    }

    /// Duration of the same transfer on a lossless channel.
    pub fn lossless(&self, chunks: u64) -> f64 {
        if chunks == 0 {
            return 0.0;
        }
        match self.ec_params(chunks) {
            Some(ec) => ec.base_time() + ec.rtt,
            None => chunks as f64 * self.channel.chunk_t_inj + self.channel.rtt,
        }
    }
}

/// Chunks in slice `j` when `buffer_chunks` is cut into `n` slices of
/// `ceil(buffer / n)`, the last one short.
pub fn slice_chunks(buffer_chunks: u64, n: usize, j: usize) -> u64 {
    let s = buffer_chunks.div_ceil(n as u64);
    buffer_chunks.saturating_sub(j as u64 * s).min(s)
}

/// Finish times `T[r][i]` of the ring recurrence for stage durations
/// `durations[r - 1][i]`, with `T[0][i] = 0` and
/// `T[r][i] = max(T[r-1][i-1], T[r-1][i]) + t[r-1][i]`.
pub fn ring_finish_times(durations: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = durations.first().map_or(0, Vec::len);
    let mut t = vec![vec![0.0; n]];
    for stage in durations {
        let prev: &Vec<f64> = t.last().expect("round 0 present");
        let next = (0..n)
            .map(|i| prev[(i + n - 1) % n].max(prev[i]) + stage[i])
            .collect();
        t.push(next);
    }
    t
}

/// One simulated Allreduce.
#[derive(Clone, Debug, PartialEq)]
pub struct RingState {
    pub n: usize,
    /// `finish[r][i]`, rounds `0..=2N-2`.
    pub finish: Vec<Vec<f64>>,
    /// Nominal step size `ceil(buffer / N)`.
    pub step_message_chunks: u64,
    /// Sampled stage durations `t[r][i]`.
    pub stage_durations: Vec<Vec<f64>>,
}

impl RingState {
    pub fn completion(&self) -> f64 {
        self.finish.last().map_or(0.0, |row| row.iter().copied().fold(0.0, f64::max))
    }
}

/// Runs the ring recurrence once. Stage `(r, i)` moves slice
/// `(i - r) mod N`, so every slice travels through every datacenter. `N < 2`
/// needs no communication.
pub fn ring_allreduce_sim<R: Rng + ?Sized>(
    n: usize,
    buffer_chunks: u64,
    sampler: &StageSampler,
    rng: &mut R,
) -> RingState {
    if n < 2 {
        return RingState {
            n,
            finish: vec![vec![0.0; n]],
            step_message_chunks: buffer_chunks,
            stage_durations: Vec::new(),
        };
    }
    let durations: Vec<Vec<f64>> = (1..=2 * n - 2)
        .map(|r| {
            (0..n)
                .map(|i| sampler.sample(slice_chunks(buffer_chunks, n, (i + 2 * n - r) % n), rng))
                .collect()
        })
        .collect();
    RingState {
        n,
        finish: ring_finish_times(&durations),
        step_message_chunks: buffer_chunks.div_ceil(n as u64),
        stage_durations: durations,
    }
}

/// Completion statistics of `trials` Allreduce runs, plus the per-stage
/// mean duration measured from the same samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllreduceStats {
    pub completion: CompletionStats,
    pub mean_stage: f64,
}

pub fn allreduce_trials(
    n: usize,
    buffer_chunks: u64,
    sampler: &StageSampler,
    trials: usize,
    seed: u64,
) -> Result<AllreduceStats, CollectiveError> {
    if trials == 0 {
        return Err(CollectiveError::NoTrials);
    }
    let runs = run_trials(trials, seed, |rng| {
        let state = ring_allreduce_sim(n, buffer_chunks, sampler, rng);
        let stages: f64 = state.stage_durations.iter().flatten().sum();
        let count = state.stage_durations.iter().map(Vec::len).sum::<usize>();
        (state.completion(), stages, count)
    });
    let times: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let count: usize = runs.iter().map(|r| r.2).sum();
    let mean_stage = if count == 0 {
        0.0
    } else {
        runs.iter().map(|r| r.1).sum::<f64>() / count as f64
    };
    Ok(AllreduceStats {
        completion: summarize(&times, seed).expect("trials >= 1"),
        mean_stage,
    })
}

/// One cell of the speedup grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub buffer_chunks: u64,
    pub n: usize,
    pub p_packet: f64,
    pub baseline: Scheme,
    pub candidate: Scheme,
    pub baseline_stats: CompletionStats,
    pub candidate_stats: CompletionStats,
    /// Baseline over candidate.
    pub mean_speedup: f64,
    pub p999_speedup: f64,
}

/// Baseline-over-candidate Allreduce speedups on every
/// `(buffer, drop rate, N)` cell. Cells that differ only in drop rate, and
/// both schemes within a cell, share a seed derived from `seed` and the
/// `(buffer, N)` position (common random numbers).
#[allow(clippy::too_many_arguments)]
pub fn speedup_grid(
    buffer_chunks: &[u64],
    p_packet: &[f64],
    n_values: &[usize],
    baseline: Scheme,
    candidate: Scheme,
    channel: StageChannel,
    trials: usize,
    seed: u64,
) -> Result<Vec<SpeedupRow>, CollectiveError> {
    let mut rows = Vec::new();
    for (bi, &buffer) in buffer_chunks.iter().enumerate() {
        for &p in p_packet {
            for (ni, &n) in n_values.iter().enumerate() {
                let series = (bi * n_values.len() + ni) as u64;
                let cell_seed: u64 = substream(seed, series).random();
                let ch = channel.with_p_packet(p);
                let base = allreduce_trials(n, buffer, &StageSampler::new(baseline, ch)?, trials, cell_seed)?;
                let cand = allreduce_trials(n, buffer, &StageSampler::new(candidate, ch)?, trials, cell_seed)?;
                rows.push(SpeedupRow {
                    buffer_chunks: buffer,
                    n,
                    p_packet: p,
                    baseline,
                    candidate,
                    mean_speedup: ratio(base.completion.mean, cand.completion.mean),
                    p999_speedup: ratio(base.completion.p999, cand.completion.p999),
                    baseline_stats: base.completion,
                    candidate_stats: cand.completion,
                });
            }
        }
    }
    Ok(rows)
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}
