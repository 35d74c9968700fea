//! `sdrsim`: analytical models, Monte Carlo sweeps, event-driven protocol runs
//! and ring Allreduce studies, written as CSV.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{ExperimentConfig, DEFAULT_SEED, SEED_ENV};

#[derive(Parser)]
#[command(name = "sdrsim", version, about = "Reliability-layer experiments for long-haul RDMA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytical expected completion times; `model validate` checks them
    /// against Monte Carlo sampling.
    Model {
        #[arg(value_enum)]
        action: Option<ModelAction>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo completion-time statistics.
    Mc {
        #[command(flatten)]
        common: Common,
    },
    /// Event-driven protocol runs over the simulated channel.
    Protocol {
        #[arg(value_enum, default_value = "run")]
        mode: ProtocolMode,
        /// Data-link packet sequence numbers to drop.
        #[arg(long, value_delimiter = ',')]
        force_drop: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Ring Allreduce speedup of the second scheme over the first.
    Allreduce {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo sweep over a preset grid (or the configured one).
    Sweep {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[command(flatten)]
        common: Common,
    },
    /// Checks a configuration and prints it fully resolved.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelAction {
    Validate,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolMode {
    Run,
    Trace,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Slowdown against message size: 128 KiB..64 GiB at p = 1e-5, all
    /// three schemes.
    Sizes,
    /// EC against SR RTO: 128 KiB..8 GiB by p = 1e-6..1e-2 in 1-2-5 steps.
    Heatmap,
    /// Ring Allreduce at 128 MiB, N = 2, 4, 8 and p = 1e-6..1e-3.
    Ring,
}

/// Options shared by every subcommand; each overrides the config file.
#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed (default: config file, then $SDRSIM_SEED, then 1).
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Round-trip time in seconds.
    #[arg(long)]
    rtt: Option<f64>,
    /// Link bandwidth in bits per second.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Timeout slack: SR RTO is rtt (1 + alpha).
    #[arg(long)]
    alpha: Option<f64>,
    /// EC fallback timeout slack, in RTTs past the last injection.
    #[arg(long)]
    beta: Option<f64>,
    /// Per-packet drop probabilities.
    #[arg(long, value_delimiter = ',')]
    p_drop: Vec<f64>,
    /// Message sizes: bytes, or with a KiB/MiB/GiB suffix.
    #[arg(long, value_delimiter = ',', value_parser = parse_size)]
    sizes: Vec<u64>,
    /// Schemes: sr_rto, sr_nack, ec_<xor|mds>_<k>_<m>.
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<String>,
    /// Datacenter counts for Allreduce.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Allreduce buffer sizes.
    #[arg(long, value_delimiter = ',', value_parser = parse_size)]
    buffers: Vec<u64>,
    /// Packet payload bytes.
    #[arg(long)]
    mtu: Option<usize>,
    /// Packets per chunk bitmap bit.
    #[arg(long)]
    chunk_packets: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, unit) = match s.find(|c: char| !c.is_ascii_digit()) {
        Some(i) => s.split_at(i),
        None => (s, ""),
    };
    let shift = match unit {
        "" | "B" => 0,
        "KiB" => 10,
        "MiB" => 20,
        "GiB" => 30,
        "TiB" => 40,
        _ => return Err(format!("unknown size unit `{unit}` (use B, KiB, MiB, GiB or TiB)")),
    };
    let n: u64 = digits.parse().map_err(|_| format!("bad size `{s}`"))?;
    n.checked_shl(shift)
        .filter(|v| v >> shift == n)
        .ok_or_else(|| format!("size `{s}` overflows"))
}

fn apply_preset(cfg: &mut ExperimentConfig, preset: Preset) {
    let decades = |lo: i32, hi: i32| (lo..=hi).map(|e| 10f64.powi(e)).collect::<Vec<_>>();
    let one_two_five = |lo: i32, hi: i32| {
        let mut v: Vec<f64> = (lo..hi).flat_map(|e| [1.0, 2.0, 5.0].map(|m| m * 10f64.powi(e))).collect();
        v.push(10f64.powi(hi));
        v
    };
    match preset {
        Preset::Sizes => {
            cfg.message_sizes = (17..=36).map(|e| 1u64 << e).collect();
            cfg.drop_rates = vec![1e-5];
            cfg.schemes = vec!["sr_rto".into(), "sr_nack".into(), "ec_mds_32_8".into()];
        }
        Preset::Heatmap => {
            cfg.message_sizes = (17..=33).map(|e| 1u64 << e).collect();
            cfg.drop_rates = one_two_five(-6, -2);
            cfg.schemes = vec!["sr_rto".into(), "ec_mds_32_8".into()];
        }
        Preset::Ring => {
            cfg.buffer_sizes = vec![128 << 20];
            cfg.n_values = vec![2, 4, 8];
            cfg.drop_rates = decades(-6, -3);
            cfg.schemes = vec!["sr_rto".into(), "ec_mds_32_8".into()];
        }
    }
}

/// Defaults, then the config file, then the preset, then flags.
fn resolve(common: &Common, preset: Option<Preset>) -> Result<ExperimentConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            ExperimentConfig::from_json(&text).map_err(|e| e.to_string())?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(p) = preset {
        apply_preset(&mut cfg, p);
    }
    let Common {
        seed,
        trials,
        rtt,
        bandwidth,
        alpha,
        beta,
        p_drop,
        sizes,
        schemes,
        n,
        buffers,
        mtu,
        chunk_packets,
        out,
        ..
    } = common.clone();
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(v.parse::<u64>().map_err(|_| format!("{SEED_ENV}=`{v}` is not an unsigned integer"))?),
        Err(_) => None,
    };
    cfg.seed = Some(seed.or(cfg.seed).or(env_seed).unwrap_or(DEFAULT_SEED));
    cfg.trials = trials.unwrap_or(cfg.trials);
    cfg.channel.rtt_s = rtt.unwrap_or(cfg.channel.rtt_s);
    cfg.channel.bandwidth_bits_per_sec = bandwidth.unwrap_or(cfg.channel.bandwidth_bits_per_sec);
    cfg.channel.alpha = alpha.unwrap_or(cfg.channel.alpha);
    cfg.channel.beta = beta.unwrap_or(cfg.channel.beta);
    cfg.mtu_bytes = mtu.unwrap_or(cfg.mtu_bytes);
    cfg.chunk_packets = chunk_packets.unwrap_or(cfg.chunk_packets);
    cfg.output = out.or(cfg.output);
    if !p_drop.is_empty() {
        cfg.drop_rates = p_drop;
    }
    for (flag, target) in [(sizes, &mut cfg.message_sizes), (buffers, &mut cfg.buffer_sizes)] {
        if !flag.is_empty() {
            *target = flag;
        }
    }
    if !schemes.is_empty() {
        cfg.schemes = schemes;
    }
    if !n.is_empty() {
        cfg.n_values = n;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    use config::Scenario;
    let (scenario, common, preset) = match &cli.command {
        Command::Model { common, .. } => (Some(Scenario::Model), common, None),
        Command::Mc { common } => (Some(Scenario::Mc), common, None),
        Command::Protocol { common, .. } => (Some(Scenario::Protocol), common, None),
        Command::Allreduce { common } => (Some(Scenario::Allreduce), common, None),
        Command::Sweep { common, preset } => (Some(Scenario::Sweep), common, *preset),
        Command::Validate { common } => (None, common, None),
    };
    let mut cfg = resolve(common, preset)?;
    cfg.scenario = cfg.scenario.or(scenario);
    let (table, ok) = match &cli.command {
        Command::Validate { .. } => {
            let json = serde_json::to_string_pretty(&cfg).expect("config serializes");
            println!("{json}");
            println!("# config_sha256: {}", cfg.hash());
            return Ok(ExitCode::SUCCESS);
        }
        Command::Model {
            action: Some(ModelAction::Validate),
            ..
        } => commands::model_validate(&cfg),
        Command::Model { action: None, .. } => (commands::model(&cfg), true),
        Command::Protocol { mode, force_drop, .. } => (commands::protocol(&cfg, *mode, force_drop)?, true),
        Command::Allreduce { .. }
        | Command::Sweep {
            preset: Some(Preset::Ring),
            ..
        } => (commands::allreduce(&cfg).map_err(|e| e.to_string())?, true),
        Command::Mc { .. } | Command::Sweep { .. } => (commands::mc(&cfg), true),
    };
    let written = match &cfg.output {
        Some(path) => std::fs::File::create(path)
            .and_then(|f| table.write(std::io::BufWriter::new(f)))
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => table.write(std::io::stdout().lock()).map_err(|e| e.to_string()),
    };
    written?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("sdrsim: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("4096").unwrap(), 4096);
        assert_eq!(parse_size("64KiB").unwrap(), 65536);
        assert_eq!(parse_size("128MiB").unwrap(), 128 << 20);
        assert_eq!(parse_size("8GiB").unwrap(), 8 << 30);
        assert!(parse_size("8GB").is_err());
        assert!(parse_size("x").is_err());
        assert!(parse_size("99999999999TiB").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"trials": 7, "seed": 3, "drop_rates": [0.01]}"#).unwrap();
        let common = Common {
            config: Some(path.clone()),
            trials: Some(9),
            ..Common::default()
        };
        let cfg = resolve(&common, None).unwrap();
        assert_eq!((cfg.trials, cfg.seed, cfg.drop_rates.clone()), (9, Some(3), vec![0.01]));
        let common = Common {
            config: Some(path),
            seed: Some(5),
            ..Common::default()
        };
        assert_eq!(resolve(&common, Some(Preset::Ring)).unwrap().seed, Some(5));
    }
}
