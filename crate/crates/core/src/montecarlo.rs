//! Stochastic completion-time samplers for SR and EC transfers, and summary
//! statistics over repeated trials.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ec::{decodable, Code, EcConfig};
use crate::model::{EcModelParams, SrModelParams};
use crate::rng::{open_unit, substream, SimRng};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum McError {
    #[error("cannot summarize an empty sample")]
    Empty,
}

/// Number of attempts until the first success with per-attempt failure
/// probability `p`: `P(Y = y) = p^(y-1) (1 - p)`. Draws beyond the point where
/// the survival drops below 1e-15 are clamped to it.
pub fn sample_geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    if p <= 0.0 {
        return 1;
    }
    let ln_p = p.ln();
    let cap = ((1e-15f64).ln() / ln_p).ceil().max(1.0);
    let y = (open_unit(rng).ln() / ln_p).ceil();
    y.clamp(1.0, cap) as u64
}

/// Number of successes before the next failure in Bernoulli(`p`) trials.
fn successes_before_failure<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    // P(G >= g) = (1-p)^g
    let g = (open_unit(rng).ln() / (-p).ln_1p()).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}

/// Visits the indices in `0..n` that a Bernoulli(`p`) process marks, in
/// increasing order, drawing only one variate per mark.
fn for_each_drop<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R, mut f: impl FnMut(u64, &mut R)) {
    if p <= 0.0 || n == 0 {
        return;
    }
    let mut next = 0u64;
    loop {
        let skip = successes_before_failure(p, rng);
        next = match next.checked_add(skip) {
            Some(i) if i < n => i,
            _ => return,
        };
        f(next, rng);
        next += 1;
    }
}

/// One SR completion time: `max_i(t_start(i) + O (Y_i - 1)) + rtt`.
///
/// Only dropped chunks can exceed the last chunk's injection time, so drop
/// positions are skip-sampled and only those chunks draw their attempt count.
pub fn sample_t_sr<R: Rng + ?Sized>(params: &SrModelParams, rng: &mut R) -> f64 {
    if params.m == 0 {
        return 0.0;
    }
    let o = params.overhead();
    let mut max = params.t_start(params.m);
    for_each_drop(params.m, params.p_drop, rng, |i, rng| {
        let extra = sample_geometric(params.p_drop, rng);
        max = max.max(params.t_start(i + 1) + o * extra as f64);
    });
    max + params.rtt
}

/// Outcome of one EC trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcSample {
    pub time: f64,
    /// Submessages that could not be decoded and were repeated over SR.
    pub failed_submessages: u64,
}

impl EcSample {
    pub fn fell_back(&self) -> bool {
        self.failed_submessages > 0
    }
}

/// One EC completion time. Drops are drawn over every data and parity chunk
/// (padding in a short final submessage is never sent and never lost); if all
/// submessages decode the transfer ends one RTT after injection, otherwise at
/// the fallback timeout plus an RTT for the NACK, followed by SR of the failed
/// submessages.
pub fn sample_t_ec<R: Rng + ?Sized>(ec: &EcModelParams, sr_sub: &SrModelParams, rng: &mut R) -> EcSample {
    let per = ec.k + ec.m;
    let mut drops = Vec::new();
    for_each_drop(ec.submessages() * per, ec.p_drop, rng, |pos, _| drops.push(pos));
    ec_outcome(ec, sr_sub, &drops, rng)
}

/// EC completion time for a given set of lost chunk positions. Submessage `s`
/// occupies positions `s (k+m) .. (s+1)(k+m)`, data blocks first. Only the
/// fallback SR phase draws from `rng`.
pub fn ec_outcome<R: Rng + ?Sized>(
    ec: &EcModelParams,
    sr_sub: &SrModelParams,
    drops: &[u64],
    rng: &mut R,
) -> EcSample {
    let cfg = EcConfig {
        k: ec.k as usize,
        m: ec.m as usize,
        code: ec.code,
    };
    let l = ec.submessages();
    let per = ec.k + ec.m;
    let last_data = ec.msg_chunks - (l - 1) * ec.k;

    let mut failed = 0u64;
    let mut present = vec![true; cfg.blocks()];
    let mut current = None;
    let mut finish = |present: &mut Vec<bool>| {
        let ok = match ec.code {
            Code::Mds => present.iter().filter(|p| !**p).count() <= cfg.m,
            Code::Xor => decodable(&cfg, present),
        };
        failed += u64::from(!ok);
        present.fill(true);
    };
    for &pos in drops {
        let (sub, block) = (pos / per, pos % per);
        if sub >= l || (sub == l - 1 && block < ec.k && block >= last_data) {
            continue;
        }
        if current != Some(sub) {
            if current.is_some() {
                finish(&mut present);
            }
            current = Some(sub);
        }
        present[block as usize] = false;
    }
    if current.is_some() {
        finish(&mut present);
    }

    let time = if failed == 0 {
        ec.base_time() + ec.rtt
    } else {
        ec.fto() + ec.rtt + sample_t_sr(&sr_sub.with_chunks(failed * ec.k), rng)
    };
    EcSample {
        time,
        failed_submessages: failed,
    }
}

/// Summary of a set of completion times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionStats {
    pub n_samples: usize,
    pub mean: f64,
    pub p50: f64,
    pub p99: f64,
    pub p999: f64,
    pub min: f64,
    pub max: f64,
    pub seed: u64,
}

/// Order statistic for quantile `q_ppm / 1e6` of sorted data: index
/// `floor(q n)`, clamped to the last element. For 1000 samples the 99.9th
/// percentile is the maximum.
pub fn percentile_sorted(sorted: &[f64], q_ppm: u64) -> f64 {
    let n = sorted.len() as u64;
    let idx = (q_ppm * n / 1_000_000).min(n - 1);
    sorted[idx as usize]
}

pub fn summarize(samples: &[f64], seed: u64) -> Result<CompletionStats, McError> {
    if samples.is_empty() {
        return Err(McError::Empty);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    // sum in sorted order so permutations give identical means
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Ok(CompletionStats {
        n_samples: sorted.len(),
        mean: mean.clamp(sorted[0], sorted[sorted.len() - 1]),
        p50: percentile_sorted(&sorted, 500_000),
        p99: percentile_sorted(&sorted, 990_000),
        p999: percentile_sorted(&sorted, 999_000),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        seed,
    })
}

/// Runs `trials` independent trials in parallel; trial `i` gets substream
/// `i` of `seed`, so results do not depend on scheduling.
pub fn run_trials<T, F>(trials: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut SimRng) -> T + Sync,
{
    (0..trials as u64)
        .into_par_iter()
        .map(|i| f(&mut substream(seed, i)))
        .collect()
}

/// Mean and standard error of the mean.
pub fn mean_and_sem(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}
