use bytes::Bytes;
use rand::{Rng, RngCore};
use rayon::prelude::*;

use sdr_sim::collectives::{speedup_grid, CollectiveError, Scheme, StageSampler};
use sdr_sim::ec::{ec_send, EcConfig, EcSimConfig};
use sdr_sim::model::{e_t_ec_lower, e_t_sr_analytical, SrModelParams};
use sdr_sim::montecarlo::{run_trials, sample_t_ec, sample_t_sr, summarize};
use sdr_sim::rng::substream;
use sdr_sim::sdr::TraceRecord;
use sdr_sim::sr::{sr_send, variant_rto_secs, SrConfig, SrSimConfig, SrVariant};
use sdr_sim::SimRng;

use crate::config::ExperimentConfig;
use crate::output::{num, Table};
use crate::ProtocolMode;

/// Bumped whenever a table's columns change.
pub const COLUMNS_VERSION: u32 = 1;

const CONTEXT: [&str; 13] = [
    "scheme",
    "size_bytes",
    "chunks",
    "p_drop",
    "p_chunk",
    "rtt_s",
    "bandwidth_bps",
    "alpha",
    "beta",
    "k",
    "m",
    "mtu_bytes",
    "chunk_packets",
];

fn table(cfg: &ExperimentConfig, command: &str, extra: &[&'static str]) -> Table {
    let mut columns = CONTEXT.to_vec();
    columns.extend_from_slice(extra);
    let mut t = Table::new(&columns);
    t.meta("tool", concat!("sdrsim ", env!("CARGO_PKG_VERSION")));
    t.meta("command", command);
    t.meta("seed", cfg.seed.expect("resolved"));
    t.meta("config_sha256", cfg.hash());
    t.meta("columns_version", COLUMNS_VERSION);
    t
}

/// The columns every row starts with, enough to rerun the cell on its own.
fn context(cfg: &ExperimentConfig, scheme: Scheme, size: u64, p: f64) -> Vec<String> {
    let (k, m) = match scheme {
        Scheme::Ec { k, m, .. } => (k.to_string(), m.to_string()),
        Scheme::Sr { .. } => (String::new(), String::new()),
    };
    let ch = &cfg.channel;
    vec![
        scheme.to_string(),
        size.to_string(),
        cfg.chunks_for(size).to_string(),
        num(p),
        num(cfg.stage_channel(p).p_chunk()),
        num(ch.rtt_s),
        num(ch.bandwidth_bits_per_sec),
        num(ch.alpha),
        num(ch.beta),
        k,
        m,
        cfg.mtu_bytes.to_string(),
        cfg.chunk_packets.to_string(),
    ]
}

/// Lossless Write time `M t_inj + rtt`, the slowdown denominator.
fn lossless_write(cfg: &ExperimentConfig, chunks: u64) -> f64 {
    chunks as f64 * cfg.chunk_t_inj() + cfg.channel.rtt_s
}

fn cell_seed(cfg: &ExperimentConfig, series: u64) -> u64 {
    substream(cfg.seed.expect("resolved"), series).random()
}

/// Every `(size, p, scheme)` cell in output order.
fn cells(cfg: &ExperimentConfig) -> Vec<(usize, u64, f64, Scheme)> {
    let schemes = cfg.schemes();
    let mut out = Vec::new();
    for (si, &size) in cfg.message_sizes.iter().enumerate() {
        for &p in &cfg.drop_rates {
            for &scheme in &schemes {
                out.push((si, size, p, scheme));
            }
        }
    }
    out
}

fn sampler(cfg: &ExperimentConfig, scheme: Scheme, p: f64) -> StageSampler {
    StageSampler::new(scheme, cfg.stage_channel(p)).expect("validated scheme")
}

pub fn model(cfg: &ExperimentConfig) -> Table {
    let mut t = table(
        cfg,
        "model",
        &["t_inj_s", "rto_s", "expected_s", "expected_slowdown", "lower_bound", "p_fallback"],
    );
    for (_, size, p, scheme) in cells(cfg) {
        let s = sampler(cfg, scheme, p);
        let chunks = cfg.chunks_for(size);
        let sr = s.sr_params(chunks);
        let (expected, lower, p_fallback) = match s.ec_params(chunks) {
            Some(ec) => {
                let fb = ec.p_fallback().expect("validated");
                (e_t_ec_lower(&ec, &sr).expect("validated"), true, num(fb))
            }
            None => {
                let e = e_t_sr_analytical(&sr).expect("validated");
                (e.value, e.lower_bound, String::new())
            }
        };
        let mut row = context(cfg, scheme, size, p);
        row.extend([
            num(sr.t_inj),
            num(sr.rto),
            num(expected),
            num(expected / lossless_write(cfg, chunks)),
            lower.to_string(),
            p_fallback,
        ]);
        t.push(row);
    }
    t
}

pub fn mc(cfg: &ExperimentConfig) -> Table {
    let mut t = table(
        cfg,
        "mc",
        &[
            "trials",
            "mean_s",
            "p50_s",
            "p99_s",
            "p999_s",
            "min_s",
            "max_s",
            "mean_slowdown",
            "p999_slowdown",
            "fallback_rate",
            "cell_seed",
        ],
    );
    let rows: Vec<Vec<String>> = cells(cfg)
        .into_par_iter()
        .map(|(si, size, p, scheme)| {
            let s = sampler(cfg, scheme, p);
            let chunks = cfg.chunks_for(size);
            let sr = s.sr_params(chunks);
            let ec = s.ec_params(chunks);
            // schemes and drop rates share random numbers at a given size
            let seed = cell_seed(cfg, si as u64);
            let runs = run_trials(cfg.trials, seed, |rng| match &ec {
                Some(ec) => {
                    let out = sample_t_ec(ec, &sr, rng);
                    (out.time, out.fell_back())
                }
                None => (sample_t_sr(&sr, rng), false),
            });
            let times: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let stats = summarize(&times, seed).expect("trials >= 1");
            let base = lossless_write(cfg, chunks);
            let fallback = match ec {
                Some(_) => num(runs.iter().filter(|r| r.1).count() as f64 / runs.len() as f64),
                None => String::new(),
            };
            let mut row = context(cfg, scheme, size, p);
            row.extend([
                cfg.trials.to_string(),
                num(stats.mean),
                num(stats.p50),
                num(stats.p99),
                num(stats.p999),
                num(stats.min),
                num(stats.max),
                num(stats.mean / base),
                num(stats.p999 / base),
                fallback,
                seed.to_string(),
            ]);
            row
        })
        .collect();
    for row in rows {
        t.push(row);
    }
    t
}

/// Chunk counts and drop probabilities of the model-validation grid; the
/// probabilities are per chunk.
pub const VALIDATE_CHUNKS: [u64; 4] = [1, 10, 100, 1000];
pub const VALIDATE_P: [f64; 5] = [1e-4, 1e-3, 1e-2, 0.1, 0.3];
pub const VALIDATE_TOLERANCE: f64 = 0.05;

/// Monte Carlo SR means against the closed form over the validation grid.
/// Returns the table and whether every in-regime point is within tolerance.
pub fn model_validate(cfg: &ExperimentConfig) -> (Table, bool) {
    let mut t = Table::new(&[
        "variant",
        "chunks",
        "p_chunk",
        "t_inj_s",
        "rtt_s",
        "rto_s",
        "in_regime",
        "trials",
        "analytical_s",
        "mc_mean_s",
        "rel_err",
        "pass",
    ]);
    for (k, v) in table(cfg, "model validate", &[]).meta {
        t.meta(&k, v);
    }
    let ch = &cfg.channel;
    let mut ok = true;
    let mut series = 0;
    for &m in &VALIDATE_CHUNKS {
        for &p in &VALIDATE_P {
            let params = SrModelParams {
                m,
                t_inj: cfg.chunk_t_inj(),
                rtt: ch.rtt_s,
                rto: variant_rto_secs(SrVariant::Rto, ch.rtt_s, ch.alpha),
                p_drop: p,
            };
            let analytical = e_t_sr_analytical(&params).expect("valid grid point").value;
            let seed = cell_seed(cfg, series);
            series += 1;
            let samples = run_trials(cfg.trials, seed, |rng| sample_t_sr(&params, rng));
            let mean = summarize(&samples, seed).expect("trials >= 1").mean;
            let rel = (mean - analytical).abs() / analytical;
            let regime = params.is_exact_regime();
            let pass = !regime || rel < VALIDATE_TOLERANCE;
            ok &= pass;
            t.push(vec![
                SrVariant::Rto.to_string(),
                m.to_string(),
                num(p),
                num(params.t_inj),
                num(params.rtt),
                num(params.rto),
                regime.to_string(),
                cfg.trials.to_string(),
                num(analytical),
                num(mean),
                num(rel),
                pass.to_string(),
            ]);
        }
    }
    (t, ok)
}

pub fn allreduce(cfg: &ExperimentConfig) -> Result<Table, CollectiveError> {
    let schemes = cfg.schemes();
    let baseline = schemes[0];
    let candidate = schemes.get(1).copied().unwrap_or(baseline);
    let buffers: Vec<u64> = cfg.buffer_sizes.iter().map(|&b| cfg.chunks_for(b)).collect();
    let grid = speedup_grid(
        &buffers,
        &cfg.drop_rates,
        &cfg.n_values,
        baseline,
        candidate,
        cfg.stage_channel(0.0),
        cfg.trials,
        cfg.seed.expect("resolved"),
    )?;
    let mut t = table(
        cfg,
        "allreduce",
        &[
            "n",
            "baseline",
            "trials",
            "baseline_mean_s",
            "baseline_p999_s",
            "candidate_mean_s",
            "candidate_p999_s",
            "mean_speedup",
            "p999_speedup",
        ],
    );
    t.meta("baseline", baseline);
    for row in grid {
        let size = cfg.buffer_sizes[buffers.iter().position(|&b| b == row.buffer_chunks).expect("grid buffer")];
        let mut r = context(cfg, candidate, size, row.p_packet);
        r.extend([
            row.n.to_string(),
            baseline.to_string(),
            cfg.trials.to_string(),
            num(row.baseline_stats.mean),
            num(row.baseline_stats.p999),
            num(row.candidate_stats.mean),
            num(row.candidate_stats.p999),
            num(row.mean_speedup),
            num(row.p999_speedup),
        ]);
        t.push(r);
    }
    Ok(t)
}

fn message(size: u64, rng: &mut SimRng) -> Result<Bytes, String> {
    let len = usize::try_from(size).map_err(|_| format!("message of {size} bytes does not fit in memory"))?;
    let mut buf = vec![0u8; len];
    rng.fill_bytes(&mut buf);
    Ok(Bytes::from(buf))
}

struct Run {
    completion: f64,
    chunk_injections: u64,
    retransmitted: u64,
    packets_dropped: u64,
    intact: bool,
    trace: Vec<TraceRecord>,
}

fn protocol_once(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    size: u64,
    p: f64,
    forced: &[u64],
    trace: bool,
    rng: &mut SimRng,
) -> Result<Run, String> {
    let msg = message(size, rng)?;
    let data = cfg.channel_params(p);
    let qp = cfg.qp();
    let t_inj = cfg.chunk_t_inj_duration();
    match scheme {
        Scheme::Sr { variant } => {
            let mut sim = SrSimConfig::new(qp, SrConfig::for_channel(variant, &data, t_inj), data);
            sim.ctrl_p_drop = p;
            sim.forced_drops = forced.to_vec();
            sim.trace = trace;
            let r = sr_send(msg.clone(), &sim, rng).map_err(|e| e.to_string())?;
            Ok(Run {
                completion: r.completion.as_secs_f64(),
                chunk_injections: r.chunk_injections,
                retransmitted: r.retransmissions,
                packets_dropped: r.packets_dropped,
                intact: r.delivered == msg[..],
                trace: r.trace,
            })
        }
        Scheme::Ec { k, m, code } => {
            let ec = EcConfig::new(k as usize, m as usize, code).map_err(|e| e.to_string())?;
            let sr = SrConfig::for_channel(SrVariant::Rto, &data, t_inj);
            let mut sim = EcSimConfig::new(qp, ec, sr, data);
            sim.ctrl_p_drop = p;
            sim.forced_drops = forced.to_vec();
            sim.trace = trace;
            let r = ec_send(msg.clone(), &sim, rng).map_err(|e| e.to_string())?;
            Ok(Run {
                completion: r.completion.as_secs_f64(),
                chunk_injections: r.chunks_injected(),
                retransmitted: r.retransmitted_chunks,
                packets_dropped: r.packets_dropped,
                intact: r.delivered == msg[..],
                trace: r.trace,
            })
        }
    }
}

pub fn protocol(cfg: &ExperimentConfig, mode: ProtocolMode, forced: &[u64]) -> Result<Table, String> {
    if mode == ProtocolMode::Trace {
        return protocol_trace(cfg, forced);
    }
    let mut t = table(
        cfg,
        "protocol run",
        &[
            "trials",
            "failed",
            "intact",
            "mean_s",
            "p50_s",
            "p999_s",
            "max_s",
            "mean_slowdown",
            "mean_chunk_injections",
            "mean_retransmitted",
            "mean_packets_dropped",
            "cell_seed",
        ],
    );
    t.meta("forced_drops", format!("{forced:?}"));
    let rows: Vec<Vec<String>> = cells(cfg)
        .into_par_iter()
        .map(|(si, size, p, scheme)| {
            let seed = cell_seed(cfg, si as u64);
            let runs = run_trials(cfg.trials, seed, |rng| protocol_once(cfg, scheme, size, p, forced, false, rng));
            let done: Vec<&Run> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
            let failed = runs.len() - done.len();
            let times: Vec<f64> = done.iter().map(|r| r.completion).collect();
            let mean_of = |f: fn(&Run) -> u64| {
                if done.is_empty() {
                    f64::NAN
                } else {
                    done.iter().map(|r| f(r) as f64).sum::<f64>() / done.len() as f64
                }
            };
            let (mean, p50, p999, max) = match summarize(&times, seed) {
                Ok(s) => (s.mean, s.p50, s.p999, s.max),
                Err(_) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
            };
            let mut row = context(cfg, scheme, size, p);
            row.extend([
                cfg.trials.to_string(),
                failed.to_string(),
                done.iter().filter(|r| r.intact).count().to_string(),
                num(mean),
                num(p50),
                num(p999),
                num(max),
                num(mean / lossless_write(cfg, cfg.chunks_for(size))),
                num(mean_of(|r| r.chunk_injections)),
                num(mean_of(|r| r.retransmitted)),
                num(mean_of(|r| r.packets_dropped)),
                seed.to_string(),
            ]);
            row
        })
        .collect();
    for row in rows {
        t.push(row);
    }
    Ok(t)
}

/// Event trace of one transfer: the first configured scheme, size and drop
/// rate.
fn protocol_trace(cfg: &ExperimentConfig, forced: &[u64]) -> Result<Table, String> {
    let scheme = cfg.schemes()[0];
    let size = cfg.message_sizes[0];
    let p = cfg.drop_rates[0];
    let mut rng = substream(cell_seed(cfg, 0), 0);
    let run = protocol_once(cfg, scheme, size, p, forced, true, &mut rng)?;
    let mut t = Table::new(&["time_ns", "event", "msg_id", "generation", "packet_offset", "action"]);
    for (k, v) in table(cfg, "protocol trace", &[]).meta {
        t.meta(&k, v);
    }
    for (col, value) in CONTEXT.iter().zip(context(cfg, scheme, size, p)) {
        t.meta(col, value);
    }
    t.meta("forced_drops", format!("{forced:?}"));
    t.meta("completion_s", num(run.completion));
    t.meta("chunk_injections", run.chunk_injections);
    t.meta("retransmitted", run.retransmitted);
    t.meta("intact", run.intact);
    for r in run.trace {
        t.push(vec![
            r.time.as_nanos().to_string(),
            r.event.to_string(),
            r.msg_id.to_string(),
            r.generation.to_string(),
            r.packet_offset.to_string(),
            r.action,
        ]);
    }
    Ok(t)
}
