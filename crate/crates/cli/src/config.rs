use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sdr_sim::collectives::{Scheme, StageChannel};
use sdr_sim::sdr::QpConfig;
use sdr_sim::simnet::{duration_from_secs, ChannelParams};

pub const SEED_ENV: &str = "SDRSIM_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Model,
    Mc,
    Protocol,
    Allreduce,
    Sweep,
}

/// Long-haul channel in plain units: seconds, bits per second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub bandwidth_bits_per_sec: f64,
    pub rtt_s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub reorder_jitter_s: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let ch = ChannelParams::default();
        ChannelConfig {
            bandwidth_bits_per_sec: ch.bandwidth_bits_per_sec,
            rtt_s: ch.rtt.as_secs_f64(),
            alpha: ch.alpha,
            beta: ch.beta,
            reorder_jitter_s: 0.0,
        }
    }
}

/// Everything one invocation needs. Read from a JSON file, then overridden
/// field by field from the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Option<Scenario>,
    pub channel: ChannelConfig,
    pub mtu_bytes: usize,
    pub chunk_packets: usize,
    /// Reliability schemes; `allreduce` compares the first (baseline) with
    /// the second.
    pub schemes: Vec<String>,
    pub message_sizes: Vec<u64>,
    /// Per-packet drop probabilities.
    pub drop_rates: Vec<f64>,
    pub n_values: Vec<usize>,
    pub buffer_sizes: Vec<u64>,
    pub trials: usize,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: None,
            channel: ChannelConfig::default(),
            mtu_bytes: 4096,
            chunk_packets: 16,
            schemes: vec!["sr_rto".into(), "sr_nack".into(), "ec_mds_32_8".into()],
            message_sizes: vec![128 << 20],
            drop_rates: vec![1e-5],
            n_values: vec![4],
            buffer_sizes: vec![128 << 20],
            trials: 1000,
            seed: None,
            output: None,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.reason)
    }
}

fn bad<T>(field: &'static str, reason: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        field,
        reason: reason.into(),
    })
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).or_else(|e| bad("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ch = &self.channel;
        if !(ch.bandwidth_bits_per_sec.is_finite() && ch.bandwidth_bits_per_sec > 0.0) {
            return bad("channel.bandwidth_bits_per_sec", "must be positive");
        }
        if !(ch.rtt_s.is_finite() && ch.rtt_s >= 0.0) {
            return bad("channel.rtt_s", "must be non-negative");
        }
        if !(ch.alpha.is_finite() && ch.alpha >= 0.0) {
            return bad("channel.alpha", "must be non-negative");
        }
        if !(ch.beta.is_finite() && ch.beta >= 0.0) {
            return bad("channel.beta", "must be non-negative");
        }
        if !(ch.reorder_jitter_s.is_finite() && ch.reorder_jitter_s >= 0.0) {
            return bad("channel.reorder_jitter_s", "must be non-negative");
        }
        if self.mtu_bytes == 0 {
            return bad("mtu_bytes", "must be positive");
        }
        if self.chunk_packets == 0 {
            return bad("chunk_packets", "must be positive");
        }
        if self.schemes.is_empty() {
            return bad("schemes", "must not be empty");
        }
        for s in &self.schemes {
            let scheme: Scheme = s.parse().or_else(|e: String| bad("schemes", e))?;
            if let Scheme::Ec { k, m, code } = scheme {
                sdr_sim::ec::EcConfig::new(k as usize, m as usize, code).or_else(|e| bad("schemes", e.to_string()))?;
            }
        }
        if self.message_sizes.is_empty() || self.message_sizes.contains(&0) {
            return bad("message_sizes", "must be a non-empty list of positive sizes");
        }
        if self.drop_rates.is_empty() {
            return bad("drop_rates", "must not be empty");
        }
        if let Some(p) = self.drop_rates.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return bad("drop_rates", format!("{p} is outside [0, 1)"));
        }
        if self.n_values.is_empty() {
            return bad("n_values", "must not be empty");
        }
        if self.buffer_sizes.is_empty() || self.buffer_sizes.contains(&0) {
            return bad("buffer_sizes", "must be a non-empty list of positive sizes");
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1");
        }
        Ok(())
    }

    pub fn schemes(&self) -> Vec<Scheme> {
        self.schemes.iter().map(|s| s.parse().expect("validated")).collect()
    }

    pub fn qp(&self) -> QpConfig {
        QpConfig {
            mtu_bytes: self.mtu_bytes,
            chunk_size_packets: self.chunk_packets,
            ..QpConfig::default()
        }
    }

    pub fn chunk_bytes(&self) -> u64 {
        (self.mtu_bytes * self.chunk_packets) as u64
    }

    pub fn chunks_for(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.chunk_bytes())
    }

    pub fn channel_params(&self, p_drop: f64) -> ChannelParams {
        let ch = &self.channel;
        ChannelParams {
            bandwidth_bits_per_sec: ch.bandwidth_bits_per_sec,
            rtt: duration_from_secs(ch.rtt_s),
            p_drop,
            alpha: ch.alpha,
            beta: ch.beta,
            reorder_jitter: duration_from_secs(ch.reorder_jitter_s),
        }
    }

    pub fn stage_channel(&self, p_drop: f64) -> StageChannel {
        StageChannel::from_params(&self.channel_params(p_drop), &self.qp()).expect("validated bandwidth")
    }

    pub fn chunk_t_inj(&self) -> f64 {
        self.stage_channel(0.0).chunk_t_inj
    }

    /// Chunk injection time on the simulated link, which serializes
    /// packet by packet.
    pub fn chunk_t_inj_duration(&self) -> Duration {
        self.channel_params(0.0).serialization(self.mtu_bytes) * self.chunk_packets as u32
    }

    /// SHA-256 of the canonical JSON form with the output path left out, hex.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig {
            output: None,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
