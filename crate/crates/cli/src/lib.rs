//! Command-line front end: batch simulation, chain-duration analysis,
//! random-walk delay bounds, trace replay and experiment presets.

pub mod preset;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use oncsim::analysis::{
    agreement, cdf_csv, chain_duration_pmf, chain_duration_pmf_r1, mc_chain_duration, multi_chain_delay, pmf_csv,
    rw_delay_bound_cdf, Agreement,
};
use oncsim::channel::parse_pattern;
use oncsim::protocol::{Algorithm, FeedbackModel, FeedbackPolicy};
use oncsim::rng::RNG_NAME;
use oncsim::sim::{golden_trace, run_batch, trace_csv, MetricsReport, PacketRecord, RunOptions, SimConfig};
use serde::Serialize;
use thiserror::Error;

use crate::preset::preset_expand;

/// Bad flag combinations; the binary exits with status 2 for these.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "oncsim", version, about = "Online network coding simulator")]
pub struct Cli {
    /// Directory for outputs not given an explicit path.
    #[arg(long, global = true, env = "ONCSIM_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a batch of seeded simulations and write a JSON metrics report.
    Simulate(SimulateArgs),
    /// Chain-duration PMF, optionally checked against Monte Carlo.
    ChainPmf(ChainPmfArgs),
    /// Delay-bound CDF from the random walk of reception differences.
    Walk(WalkArgs),
    /// Replay an erasure pattern file and write the per-slot trace.
    Trace(TraceArgs),
    /// Run a named experiment sweep (fig3, fig4, fig5).
    Preset(PresetArgs),
}

/// A delay threshold; `none` means no threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threshold(pub Option<u32>);

fn parse_threshold(s: &str) -> Result<Threshold, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(Threshold(None));
    }
    match s.parse::<u32>() {
        Ok(0) | Err(_) => Err(format!("expected a positive slot count or `none`, got {s:?}")),
        Ok(t) => Ok(Threshold(Some(t))),
    }
}

/// Erasure probabilities: one value or a comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub struct Epsilons(pub Vec<f64>);

fn parse_epsilons(s: &str) -> Result<Epsilons, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad erasure probability {v:?}")))
        .collect::<Result<_, _>>()
        .map(Epsilons)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON configuration; flags given alongside override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub receivers: Option<usize>,
    /// Single value for every receiver or one per receiver, comma separated.
    #[arg(long, value_parser = parse_epsilons)]
    pub epsilons: Option<Epsilons>,
    #[arg(long)]
    pub packets: Option<u32>,
    #[arg(long, value_parser = parse_threshold)]
    pub threshold: Option<Threshold>,
    /// Danger margin in slots before a deadline.
    #[arg(long)]
    pub delta: Option<u32>,
    /// Coding field GF(2^m).
    #[arg(long)]
    pub field_bits: Option<u8>,
    #[arg(long)]
    pub no_deferral: bool,
    #[arg(long)]
    pub discard_expired: bool,
    /// Probability that a feedback report is lost.
    #[arg(long)]
    pub fb_loss: Option<f64>,
    #[arg(long)]
    pub fb_delay: Option<u32>,
    /// optimistic, pessimistic, ignore or random:<q>.
    #[arg(long)]
    pub fb_policy: Option<FeedbackPolicy>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<u64>,
    #[arg(long)]
    pub max_slots: Option<u32>,
    /// Report path (default: report.json in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write one CSV row per decoded packet.
    #[arg(long)]
    pub packets_csv: Option<PathBuf>,
    /// Write the effective configuration as JSON.
    #[arg(long)]
    pub dump_config: Option<PathBuf>,
    /// Check the protocol invariants every slot.
    #[arg(long)]
    pub check_invariants: bool,
}

#[derive(Debug, Args)]
pub struct ChainPmfArgs {
    #[arg(long)]
    pub eps1: f64,
    #[arg(long)]
    pub eps2: f64,
    #[arg(long, default_value_t = 200)]
    pub tmax: u32,
    /// Receiver whose chains are measured.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub receiver: u8,
    /// Output the delay of this many chains plus one, summed.
    #[arg(long, default_value_t = 0)]
    pub chains: u32,
    /// Monte Carlo trials for the cross-check; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub mc_runs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// PMF path (default: chain_pmf.csv in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WalkArgs {
    /// One erasure probability per receiver; receiver 1 is tagged.
    #[arg(long, value_parser = parse_epsilons)]
    pub epsilons: Epsilons,
    #[arg(long, default_value_t = 1000)]
    pub slots: u32,
    #[arg(long, default_value_t = 10_000)]
    pub runs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CDF path (default: walk_cdf.csv in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub algorithm: Algorithm,
    /// One line per slot, e.g. `OK,E`.
    #[arg(long)]
    pub pattern: PathBuf,
    /// Packets to send (default: one per pattern slot).
    #[arg(long)]
    pub packets: Option<u32>,
    /// Trace path (default: trace.csv in the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    pub name: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = preset::DEFAULT_RUNS)]
    pub runs: u64,
    #[arg(long, default_value_t = 100)]
    pub packets: u32,
}

#[derive(Serialize)]
struct Metadata<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    rng: &'static str,
    seed: u64,
    command: &'a str,
    #[serde(flatten)]
    details: T,
}

fn output_path(out_dir: &Path, explicit: Option<&PathBuf>, default_name: &str) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| out_dir.join(default_name))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn write_metadata<T: Serialize>(path: &Path, command: &str, seed: u64, details: T) -> Result<()> {
    let meta = Metadata {
        tool: "oncsim",
        version: env!("CARGO_PKG_VERSION"),
        rng: RNG_NAME,
        seed,
        command,
        details,
    };
    write_file(path, &(serde_json::to_string_pretty(&meta)? + "\n"))
}

fn json(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(&cli.out_dir, args),
        Command::ChainPmf(args) => chain_pmf(&cli.out_dir, args),
        Command::Walk(args) => walk(&cli.out_dir, args),
        Command::Trace(args) => trace(&cli.out_dir, args),
        Command::Preset(args) => run_preset(&cli.out_dir, args),
    }
}

/// Builds the configuration from an optional file plus flags.
pub fn simulate_config(args: &SimulateArgs) -> Result<SimConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<SimConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let algorithm = args
                .algorithm
                .ok_or_else(|| usage("--algorithm is required without --config"))?;
            if args.epsilons.is_none() {
                return Err(usage("--epsilons is required without --config"));
            }
            SimConfig::new(algorithm, Vec::new())
        }
    };
    if let Some(a) = args.algorithm {
        config.algorithm = a;
    }
    if let Some(Epsilons(eps)) = &args.epsilons {
        let n = args.receivers.unwrap_or(eps.len());
        config.epsilons = match eps.len() {
            1 => vec![eps[0]; n],
            len if len == n => eps.clone(),
            len => return Err(usage(format!("{len} erasure probabilities for {n} receivers"))),
        };
        config.n_receivers = n;
    } else if let Some(n) = args.receivers {
        if n != config.n_receivers {
            return Err(usage("--receivers changes the receiver count; give --epsilons too"));
        }
    }
    if let Some(m) = args.packets {
        config.m_packets = m;
    }
    if let Some(Threshold(t)) = args.threshold {
        config.threshold = t;
    }
    if let Some(d) = args.delta {
        config.delta_margin = d;
    }
    if args.field_bits.is_some() {
        config.field_bits = args.field_bits;
    }
    if args.no_deferral {
        config.deferral = false;
    }
    if args.discard_expired {
        config.discard_expired = true;
    }
    if args.fb_loss.is_some() || args.fb_delay.is_some() || args.fb_policy.is_some() {
        let (loss0, delay0, policy0) = match config.feedback {
            FeedbackModel::Lossy {
                fb_loss,
                fb_delay,
                policy,
            } => (fb_loss, fb_delay, policy),
            FeedbackModel::Perfect => (0.0, 0, FeedbackPolicy::Optimistic),
        };
        config.feedback = FeedbackModel::Lossy {
            fb_loss: args.fb_loss.unwrap_or(loss0),
            fb_delay: args.fb_delay.unwrap_or(delay0),
            policy: args.fb_policy.unwrap_or(policy0),
        };
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(r) = args.runs {
        config.runs = r;
    }
    if args.max_slots.is_some() {
        config.max_slots = args.max_slots;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

pub fn packets_csv(records: &[PacketRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        w.write_record(["run", "receiver", "packet", "first_tx_slot", "decode_slot", "delay"])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn simulate(out_dir: &Path, args: SimulateArgs) -> Result<()> {
    let config = simulate_config(&args)?;
    if let Some(path) = &args.dump_config {
        write_file(path, &json(&config)?)?;
    }
    let options = RunOptions {
        packets: args.packets_csv.is_some(),
        check_invariants: args.check_invariants,
        ..RunOptions::default()
    };
    let batch = run_batch(&config, &options)?;
    let out = output_path(out_dir, args.out.as_ref(), "report.json");
    write_file(&out, &json(&batch.report)?)?;
    if let Some(path) = &args.packets_csv {
        write_file(path, &packets_csv(&batch.packets)?)?;
    }
    #[derive(Serialize)]
    struct Details<'a> {
        runs: u64,
        config: &'a SimConfig,
    }
    write_metadata(
        &sidecar_path(&out),
        "simulate",
        config.seed,
        Details {
            runs: config.runs,
            config: &config,
        },
    )?;
    let r = &batch.report;
    println!(
        "{} N={} runs={}: throughput {:.4} [{:.4}, {:.4}], mean delay {:.3}, mean max delay {:.2}, zero-delay {:.3}, queue mean {:.2} max {}",
        config.algorithm,
        config.n_receivers,
        r.runs,
        r.throughput.mean,
        r.throughput.min,
        r.throughput.max,
        r.mean_delay,
        r.mean_max_delay,
        r.zero_delay_fraction,
        r.queue_mean,
        r.queue_max
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn chain_pmf(out_dir: &Path, args: ChainPmfArgs) -> Result<()> {
    let pmf = match args.receiver {
        1 => chain_duration_pmf_r1(args.eps1, args.eps2, args.tmax),
        _ => chain_duration_pmf(args.eps1, args.eps2, args.tmax),
    }
    .map_err(|e| usage(e.to_string()))?;
    let out = output_path(out_dir, args.out.as_ref(), "chain_pmf.csv");
    let (csv, tail) = if args.chains == 0 {
        (pmf_csv((1..=pmf.t_max).map(|t| (t, pmf.p(t))))?, pmf.tail)
    } else {
        let d = multi_chain_delay(&pmf, args.chains);
        (pmf_csv(d.mass.iter().enumerate().map(|(v, &p)| (v as u32, p)))?, d.tail)
    };
    write_file(&out, &csv)?;

    let mc: Option<Agreement> = if args.mc_runs > 0 && args.chains == 0 {
        // Receiver 1's chains are receiver 2's with the channels swapped.
        let (e1, e2) = match args.receiver {
            1 => (args.eps2, args.eps1),
            _ => (args.eps1, args.eps2),
        };
        let hist = mc_chain_duration(e1, e2, args.mc_runs, args.seed)?;
        let a = agreement(&pmf, &hist, 25.0);
        println!(
            "monte carlo: {} trials, {} bins checked, {} outside 3 sigma ({:.2}%), max |z| {:.3}",
            hist.trials,
            a.bins_checked,
            a.violations,
            100.0 * a.violation_fraction(),
            a.max_abs_z
        );
        Some(a)
    } else {
        None
    };
    #[derive(Serialize)]
    struct Details {
        epsilons: [f64; 2],
        receiver: u8,
        chains: u32,
        t_max: u32,
        tail_mass: f64,
        mc_runs: u64,
        agreement: Option<Agreement>,
    }
    write_metadata(
        &sidecar_path(&out),
        "chain-pmf",
        args.seed,
        Details {
            epsilons: [args.eps1, args.eps2],
            receiver: args.receiver,
            chains: args.chains,
            t_max: args.tmax,
            tail_mass: tail,
            mc_runs: args.mc_runs,
            agreement: mc,
        },
    )?;
    println!("P(1) = {}, tail mass {:e}; wrote {}", pmf.p(1), tail, out.display());
    Ok(())
}

fn walk(out_dir: &Path, args: WalkArgs) -> Result<()> {
    let Epsilons(epsilons) = args.epsilons;
    let cdf = rw_delay_bound_cdf(&epsilons, args.slots, args.runs, args.seed).map_err(|e| usage(e.to_string()))?;
    let out = output_path(out_dir, args.out.as_ref(), "walk_cdf.csv");
    write_file(&out, &cdf_csv(cdf.cdf.iter().enumerate().map(|(d, &p)| (d as u32, p)))?)?;
    #[derive(Serialize)]
    struct Details<'a> {
        epsilons: &'a [f64],
        runs: u64,
        horizon: u32,
        samples: u64,
        censored_samples: u64,
        horizon_censored: bool,
    }
    write_metadata(
        &sidecar_path(&out),
        "walk",
        args.seed,
        Details {
            epsilons: &epsilons,
            runs: cdf.runs,
            horizon: cdf.horizon,
            samples: cdf.samples,
            censored_samples: cdf.censored_samples,
            horizon_censored: cdf.censored_samples > 0,
        },
    )?;
    println!(
        "{} samples ({} censored); P(bound = 0) = {:.4}; wrote {}",
        cdf.samples,
        cdf.censored_samples,
        cdf.cdf[0],
        out.display()
    );
    Ok(())
}

fn trace(out_dir: &Path, args: TraceArgs) -> Result<()> {
    let text = fs::read_to_string(&args.pattern).with_context(|| format!("reading {}", args.pattern.display()))?;
    let pattern = parse_pattern(&text)?;
    let m = args.packets.unwrap_or(pattern.len().max(1) as u32);
    let rows = golden_trace(args.algorithm, &pattern, m)?;
    let out = output_path(out_dir, args.out.as_ref(), "trace.csv");
    write_file(&out, &trace_csv(&rows)?)?;
    #[derive(Serialize)]
    struct Details<'a> {
        algorithm: Algorithm,
        pattern: &'a Path,
        slots: usize,
        m_packets: u32,
    }
    write_metadata(
        &sidecar_path(&out),
        "trace",
        0,
        Details {
            algorithm: args.algorithm,
            pattern: &args.pattern,
            slots: rows.len(),
            m_packets: m,
        },
    )?;
    for r in &rows {
        println!("{:>3}  {}", r.slot, if r.support.is_empty() { "-" } else { &r.support });
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// One row of a preset summary. A missing threshold is an empty field.
#[derive(Debug, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub algorithm: String,
    pub receivers: usize,
    pub threshold: Option<u32>,
    pub epsilons: String,
    pub runs: u64,
    pub m_packets: u32,
    pub throughput_mean: f64,
    pub throughput_min: f64,
    pub throughput_max: f64,
    pub throughput_global_mean: f64,
    pub mean_delay: f64,
    pub max_delay: u32,
    pub mean_max_delay: f64,
    pub zero_delay_fraction: f64,
    pub queue_mean: f64,
    pub queue_max: usize,
    pub slots_mean: f64,
}

impl SummaryRow {
    fn new(scenario: &str, config: &SimConfig, r: &MetricsReport) -> Self {
        Self {
            scenario: scenario.to_string(),
            algorithm: config.algorithm.name().to_string(),
            receivers: config.n_receivers,
            threshold: config.threshold,
            epsilons: config
                .epsilons
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(" "),
            runs: r.runs,
            m_packets: config.m_packets,
            throughput_mean: r.throughput.mean,
            throughput_min: r.throughput.min,
            throughput_max: r.throughput.max,
            throughput_global_mean: r.throughput_global.mean,
            mean_delay: r.mean_delay,
            max_delay: r.max_delay,
            mean_max_delay: r.mean_max_delay,
            zero_delay_fraction: r.zero_delay_fraction,
            queue_mean: r.queue_mean,
            queue_max: r.queue_max,
            slots_mean: r.total_slots.mean,
        }
    }
}

#[derive(Debug, Serialize)]
struct CdfRow<'a> {
    scenario: &'a str,
    algorithm: &'a str,
    threshold: Option<u32>,
    delay: usize,
    cumulative_probability: f64,
}

fn run_preset(out_dir: &Path, args: PresetArgs) -> Result<()> {
    let entries = preset_expand(&args.name).map_err(|e| usage(e.to_string()))?;
    let mut summary = csv::Writer::from_writer(Vec::new());
    let mut cdf = csv::Writer::from_writer(Vec::new());
    for e in &entries {
        let mut config = e.config.clone();
        config.seed = args.seed;
        config.runs = args.runs;
        config.m_packets = args.packets;
        let report = run_batch(&config, &RunOptions::default())?.report;
        let row = SummaryRow::new(&e.scenario, &config, &report);
        eprintln!(
            "{} {} t={}: throughput {:.4}, mean max delay {:.2}",
            e.scenario,
            config.algorithm,
            config.threshold.map_or("none".to_string(), |t| t.to_string()),
            row.throughput_mean,
            row.mean_max_delay
        );
        summary.serialize(&row)?;
        for (delay, &p) in report.delay_cdf.iter().enumerate() {
            cdf.serialize(CdfRow {
                scenario: &e.scenario,
                algorithm: config.algorithm.name(),
                threshold: config.threshold,
                delay,
                cumulative_probability: p,
            })?;
        }
    }
    let summary_path = out_dir.join(format!("{}_summary.csv", args.name));
    let cdf_path = out_dir.join(format!("{}_delay_cdf.csv", args.name));
    write_file(&summary_path, &String::from_utf8(summary.into_inner()?)?)?;
    write_file(&cdf_path, &String::from_utf8(cdf.into_inner()?)?)?;
    #[derive(Serialize)]
    struct Details<'a> {
        preset: &'a str,
        runs: u64,
        m_packets: u32,
        configurations: usize,
        receiver_counts: Vec<usize>,
        files: [String; 2],
    }
    let mut receiver_counts: Vec<usize> = entries.iter().map(|e| e.config.n_receivers).collect();
    receiver_counts.dedup();
    write_metadata(
        &out_dir.join(format!("{}.meta.json", args.name)),
        "preset",
        args.seed,
        Details {
            preset: &args.name,
            runs: args.runs,
            m_packets: args.packets,
            configurations: entries.len(),
            receiver_counts,
            files: [
                summary_path.file_name().unwrap().to_string_lossy().into_owned(),
                cdf_path.file_name().unwrap().to_string_lossy().into_owned(),
            ],
        },
    )?;
    println!("wrote {} and {}", summary_path.display(), cdf_path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim_args(argv: &[&str]) -> SimulateArgs {
        let mut full = vec!["oncsim", "simulate"];
        full.extend_from_slice(argv);
        match Cli::try_parse_from(full).unwrap().command {
            Command::Simulate(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn threshold_spelling() {
        assert_eq!(parse_threshold("none"), Ok(Threshold(None)));
        assert_eq!(parse_threshold("10"), Ok(Threshold(Some(10))));
        assert!(parse_threshold("0").is_err());
        assert!(parse_threshold("inf").is_err());
    }

    #[test]
    fn epsilon_broadcast() {
        let c = simulate_config(&sim_args(&["--algorithm", "snc", "--receivers", "8", "--epsilons", "0.25"])).unwrap();
        assert_eq!(c.epsilons, vec![0.25; 8]);
        let c = simulate_config(&sim_args(&["--algorithm", "anc", "--epsilons", "0.1,0.2,0.3"])).unwrap();
        assert_eq!(c.n_receivers, 3);
        let e = simulate_config(&sim_args(&["--algorithm", "anc", "--receivers", "4", "--epsilons", "0.1,0.2"]));
        assert!(e.unwrap_err().downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn threshold_and_feedback_flags() {
        let c = simulate_config(&sim_args(&[
            "--algorithm",
            "snct",
            "--epsilons",
            "0.25,0.25",
            "--threshold",
            "10",
            "--fb-loss",
            "0.2",
            "--fb-policy",
            "random:0.5",
        ]))
        .unwrap();
        assert_eq!(c.threshold, Some(10));
        assert_eq!(
            c.feedback,
            FeedbackModel::Lossy {
                fb_loss: 0.2,
                fb_delay: 0,
                policy: FeedbackPolicy::Random { q: 0.5 }
            }
        );
        let missing = simulate_config(&sim_args(&["--algorithm", "snct", "--epsilons", "0.25"]));
        assert!(missing.unwrap_err().downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn empty_packet_dump_has_header() {
        assert_eq!(packets_csv(&[]).unwrap(), "run,receiver,packet,first_tx_slot,decode_slot,delay\n");
    }
}
