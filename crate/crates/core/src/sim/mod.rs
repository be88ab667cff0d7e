//! Full simulation runs: the slot loop tying sender, channels and receivers
//! together, optional invariant checks, batch execution and golden traces.

mod metrics;
mod trace;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{validate_epsilons, ChannelError, ChannelSet, ReceptionBitmap};
use crate::field::{CodedPacket, Field, FieldError, PacketId};
use crate::protocol::{
    leader_set, Algorithm, ChainRecord, FeedbackModel, ProtocolConfig, ProtocolError,
    ReceiverState, SenderState, Slot,
};
use crate::rng::{stream, Purpose};

pub use metrics::{
    ChainBin, MetricsAccumulator, MetricsReport, ReceiverReport, RunSummary, Spread,
};
pub use trace::{trace_csv, TraceRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("run {run} did not finish within {max_slots} slots")]
    HorizonExceeded { run: u64, max_slots: u32 },
    #[error("run {run}, slot {slot}: invariant violated: {message}")]
    Invariant { run: u64, slot: Slot, message: String },
}

fn default_packets() -> u32 {
    100
}

fn default_true() -> bool {
    true
}

fn default_runs() -> u64 {
    1
}

/// Everything that determines a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_receivers: usize,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_packets")]
    pub m_packets: u32,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub threshold: Option<u32>,
    #[serde(default)]
    pub delta_margin: u32,
    /// Extension degree of the coding field; GF(2) for two receivers and
    /// GF(2^8) otherwise when unset.
    #[serde(default)]
    pub field_bits: Option<u8>,
    #[serde(default = "default_true")]
    pub deferral: bool,
    #[serde(default)]
    pub discard_expired: bool,
    #[serde(default)]
    pub feedback: FeedbackModel,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: u64,
    /// Defaults to 200 slots per packet.
    #[serde(default)]
    pub max_slots: Option<u32>,
}

impl SimConfig {
    pub fn new(algorithm: Algorithm, epsilons: Vec<f64>) -> Self {
        Self {
            n_receivers: epsilons.len(),
            epsilons,
            m_packets: default_packets(),
            algorithm,
            threshold: None,
            delta_margin: 0,
            field_bits: None,
            deferral: true,
            discard_expired: false,
            feedback: FeedbackModel::Perfect,
            seed: 0,
            runs: 1,
            max_slots: None,
        }
    }

    pub fn field(&self) -> Result<Field, SimError> {
        let bits = self
            .field_bits
            .unwrap_or(if self.n_receivers == 2 { 1 } else { 8 });
        Ok(Field::new(bits)?)
    }

    pub fn max_slots(&self) -> u32 {
        self.max_slots
            .unwrap_or_else(|| self.m_packets.saturating_mul(200))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.epsilons.len() != self.n_receivers {
            return Err(SimError::Config(format!(
                "{} epsilons for {} receivers",
                self.epsilons.len(),
                self.n_receivers
            )));
        }
        validate_epsilons(&self.epsilons)?;
        if self.m_packets == 0 {
            return Err(SimError::Config("m_packets must be at least 1".into()));
        }
        if self.threshold == Some(0) {
            return Err(SimError::Config("threshold must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(SimError::Config("runs must be at least 1".into()));
        }
        if self.algorithm.uses_threshold() && self.threshold.is_none() {
            return Err(ProtocolError::MissingThreshold(self.algorithm).into());
        }
        self.feedback.validate()?;
        self.field()?;
        Ok(())
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig, SimError> {
        let mut p = ProtocolConfig::new(self.algorithm, self.m_packets, self.field()?);
        p.deferral = self.deferral;
        p.threshold = self.threshold;
        p.danger_margin = self.delta_margin;
        p.discard_expired = self.discard_expired;
        Ok(p)
    }
}

/// Per-run switches that do not change the simulated process.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replay this erasure pattern instead of sampling; the run stops when
    /// the pattern ends.
    pub pattern: Option<Vec<ReceptionBitmap>>,
    pub trace: bool,
    /// Keep one record per decoded packet.
    pub packets: bool,
    /// Check the protocol invariants every slot and fail on violation.
    pub check_invariants: bool,
}

/// One decoded packet, as written to the per-packet CSV dump. Receiver and
/// packet numbers are one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub run: u64,
    pub receiver: usize,
    pub packet: u32,
    pub first_tx_slot: Slot,
    pub decode_slot: Slot,
    pub delay: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReceiverOutcome {
    pub decoded: u64,
    pub delay_sum: u64,
    pub max_delay: u32,
    pub last_decode_slot: Slot,
    /// Packets given up on under `discard_expired`.
    pub lost: u64,
}

impl ReceiverOutcome {
    /// Decoded packets per slot up to this receiver's last decode.
    pub fn throughput(&self) -> f64 {
        if self.last_decode_slot == 0 {
            0.0
        } else {
            self.decoded as f64 / f64::from(self.last_decode_slot)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub run: u64,
    /// Every receiver decoded (or gave up on) every packet.
    pub completed: bool,
    pub slots: Slot,
    pub receivers: Vec<ReceiverOutcome>,
    /// Pooled over receivers, indexed by delay.
    pub delay_histogram: Vec<u64>,
    /// Queue size at the end of each slot.
    pub queue_sizes: Vec<usize>,
    pub chains: Vec<Vec<ChainRecord>>,
    pub sent: Vec<Option<CodedPacket>>,
    pub trace: Vec<TraceRow>,
    pub packets: Vec<PacketRecord>,
}

impl RunOutput {
    pub fn last_decode_slot(&self) -> Slot {
        self.receivers
            .iter()
            .map(|r| r.last_decode_slot)
            .max()
            .unwrap_or(0)
    }

    pub fn max_delay(&self) -> u32 {
        self.receivers.iter().map(|r| r.max_delay).max().unwrap_or(0)
    }

    pub fn report(&self) -> MetricsReport {
        let mut acc = MetricsAccumulator::default();
        acc.add_run(self);
        acc.report()
    }
}

fn all_done(receivers: &[ReceiverState], sender: &SenderState, m: u32, slot: Slot) -> bool {
    let discard = sender.config().discard_expired;
    receivers.iter().all(|r| {
        let k = r.knowledge();
        k.decoded_count() == m as usize
            || discard
                && (0..m)
                    .map(PacketId)
                    .all(|p| k.is_decoded(p) || sender.is_expired(p, slot + 1))
    })
}

/// Runs one simulation; `run` selects the random streams.
pub fn run_sim(config: &SimConfig, run: u64, options: &RunOptions) -> Result<RunOutput, SimError> {
    config.validate()?;
    let n = config.n_receivers;
    let m = config.m_packets;
    let field = config.field()?;
    let mut channel = match &options.pattern {
        Some(p) => ChannelSet::replay(n, p.clone())?,
        None => ChannelSet::random(
            config.epsilons.clone(),
            stream(config.seed, run, Purpose::Channel),
        )?,
    };
    let mut sender = SenderState::new(
        config.protocol_config()?,
        n,
        config.feedback,
        stream(config.seed, run, Purpose::Protocol),
        stream(config.seed, run, Purpose::Feedback),
    )?;
    let mut receivers = vec![ReceiverState::new(field); n];
    let perfect = config.feedback.is_perfect();
    let optimal = perfect && !config.algorithm.uses_threshold();
    let max_slots = config.max_slots();
    let invariant = |slot, message: String| SimError::Invariant { run, slot, message };

    let mut out = RunOutput {
        run,
        receivers: vec![ReceiverOutcome::default(); n],
        ..RunOutput::default()
    };
    let mut slot: Slot = 0;
    while !all_done(&receivers, &sender, m, slot) {
        if slot >= max_slots {
            return Err(SimError::HorizonExceeded { run, max_slots });
        }
        let Some(bitmap) = channel.sample_slot() else {
            break;
        };
        slot += 1;
        let sent = sender.select(slot)?;
        let ranks_before: Vec<usize> = receivers.iter().map(|r| r.innovative_count()).collect();
        let mut row = options.trace.then(|| TraceRow::new(slot, sent.as_ref(), &bitmap));

        for (i, r) in receivers.iter_mut().enumerate() {
            match &sent {
                Some(pkt) if bitmap.received(i) => {
                    let finished = r.knowledge().decoded_count() == m as usize;
                    let report = r.deliver(pkt, slot, sender.first_tx_slots());
                    if options.check_invariants && optimal && !finished && !report.innovative {
                        return Err(invariant(
                            slot,
                            format!("receiver {} got a non-innovative {pkt}", i + 1),
                        ));
                    }
                    let o = &mut out.receivers[i];
                    for d in &report.decoded {
                        o.decoded += 1;
                        o.delay_sum += u64::from(d.delay);
                        o.max_delay = o.max_delay.max(d.delay);
                        o.last_decode_slot = slot;
                        let bin = d.delay as usize;
                        if out.delay_histogram.len() <= bin {
                            out.delay_histogram.resize(bin + 1, 0);
                        }
                        out.delay_histogram[bin] += 1;
                        if options.packets {
                            out.packets.push(PacketRecord {
                                run,
                                receiver: i + 1,
                                packet: d.packet.0 + 1,
                                first_tx_slot: d.first_tx_slot,
                                decode_slot: d.decode_slot,
                                delay: d.delay,
                            });
                        }
                    }
                    if let Some(row) = row.as_mut() {
                        row.record_delivery(i, &report);
                    }
                }
                Some(_) => r.erase(slot, m),
                None => {}
            }
            r.end_slot(slot, sender.transmitted_count());
        }

        sender.feedback(slot, sent.as_ref(), &bitmap, &receivers);
        if options.check_invariants {
            check_slot(&receivers, &ranks_before, &sender, perfect)
                .map_err(|message| invariant(slot, message))?;
        }
        out.queue_sizes.push(sender.queue().len());
        if let Some(mut row) = row {
            row.queue_size = sender.queue().len();
            let counts: Vec<usize> = receivers.iter().map(|r| r.received_count()).collect();
            row.leaders = leader_set(&counts).into_iter().map(|i| i + 1).collect();
            out.trace.push(row);
        }
        out.sent.push(sent);
    }

    out.completed = all_done(&receivers, &sender, m, slot);
    out.slots = slot;
    for (o, r) in out.receivers.iter_mut().zip(&receivers) {
        o.lost = u64::from(m) - r.knowledge().decoded_count() as u64;
    }
    if !out.completed {
        // A replayed pattern ran out: nothing is counted as lost.
        out.receivers.iter_mut().for_each(|o| o.lost = 0);
    }
    out.chains = receivers.iter().map(|r| r.chains().to_vec()).collect();
    Ok(out)
}

/// Per-slot protocol invariants, evaluated after deliveries and feedback.
fn check_slot(
    receivers: &[ReceiverState],
    ranks_before: &[usize],
    sender: &SenderState,
    perfect: bool,
) -> Result<(), String> {
    // A matrix only changes when it absorbs an innovative packet.
    for (i, r) in receivers.iter().enumerate() {
        if r.innovative_count() == ranks_before[i] {
            continue;
        }
        r.knowledge()
            .check_invariants()
            .map_err(|e| format!("receiver {}: {e}", i + 1))?;
    }
    if !perfect {
        return Ok(());
    }
    let transmitted = sender.transmitted_count();
    for i in leader_set(ranks_before) {
        let r = &receivers[i];
        if r.innovative_count() > ranks_before[i] && r.knowledge().decoded_count() < transmitted {
            return Err(format!(
                "leader {} decoded {} of {} transmitted packets",
                i + 1,
                r.knowledge().decoded_count(),
                transmitted
            ));
        }
    }
    let drops_when_seen = sender.config().algorithm.drops_when_seen();
    for &p in sender.queue() {
        let finished = if drops_when_seen {
            receivers.iter().all(|r| r.knowledge().is_seen(p))
        } else {
            receivers.iter().all(|r| r.knowledge().is_decoded(p))
        };
        if finished && !sender.config().discard_expired {
            return Err(format!("{p} is still queued although no receiver needs it"));
        }
    }
    Ok(())
}

/// The result of [`run_batch`].
#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub report: MetricsReport,
    pub accumulator: MetricsAccumulator,
    /// Per-packet records of every run when requested, ordered by run.
    pub packets: Vec<PacketRecord>,
}

/// Runs `config.runs` independent runs in parallel. The result depends only
/// on the configuration, not on scheduling.
pub fn run_batch(config: &SimConfig, options: &RunOptions) -> Result<BatchOutput, SimError> {
    config.validate()?;
    let outputs: Vec<RunOutput> = (0..config.runs)
        .into_par_iter()
        .map(|run| run_sim(config, run, options))
        .collect::<Result<_, _>>()?;
    let mut accumulator = MetricsAccumulator::default();
    let mut packets = Vec::new();
    for o in &outputs {
        accumulator.add_run(o);
        packets.extend_from_slice(&o.packets);
    }
    Ok(BatchOutput {
        report: accumulator.report(),
        accumulator,
        packets,
    })
}

/// Replays `pattern` through `algorithm` with two-receiver defaults and
/// returns the per-slot trace.
pub fn golden_trace(
    algorithm: Algorithm,
    pattern: &[ReceptionBitmap],
    m_packets: u32,
) -> Result<Vec<TraceRow>, SimError> {
    let Some(first) = pattern.first() else {
        return Ok(Vec::new());
    };
    let mut config = SimConfig::new(algorithm, vec![0.0; first.len()]);
    config.m_packets = m_packets;
    let options = RunOptions {
        pattern: Some(pattern.to_vec()),
        trace: true,
        ..RunOptions::default()
    };
    Ok(run_sim(&config, 0, &options)?.trace)
}

/// First slot at which ANC's queue is larger than SNC's when both face the
/// same erasures, if any.
pub fn queue_dominance_violation(config: &SimConfig, run: u64) -> Result<Option<Slot>, SimError> {
    let mut anc = config.clone();
    anc.algorithm = Algorithm::Anc;
    let mut snc = config.clone();
    snc.algorithm = Algorithm::Snc;
    let options = RunOptions::default();
    let a = run_sim(&anc, run, &options)?.queue_sizes;
    let s = run_sim(&snc, run, &options)?.queue_sizes;
    Ok(a.iter()
        .zip(s.iter().chain(std::iter::repeat(&0)))
        .position(|(x, y)| x > y)
        .map(|i| i as Slot + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::parse_pattern;

    const TABLE_PATTERN: &str = "OK,E\nOK,OK\nOK,OK\nOK,OK\nOK,E\nOK,OK\nE,OK\nOK,OK\nOK,OK\nE,OK\nOK,E\nOK,OK\n";

    fn sent(rows: &[TraceRow]) -> Vec<&str> {
        rows.iter().map(|r| r.support.as_str()).collect()
    }

    #[test]
    fn anc_reproduces_first_example() {
        let rows = golden_trace(Algorithm::Anc, &parse_pattern(TABLE_PATTERN).unwrap(), 100).unwrap();
        assert_eq!(
            sent(&rows),
            ["1", "1+2", "2+3", "3+4", "4+5", "4+6", "6+7", "7", "5+8", "8+9", "9", "9+10"]
        );
        assert!(rows.iter().all(|r| r.coefficients.split(':').all(|c| c == "1")));
    }

    #[test]
    fn snc_reproduces_systematic_example() {
        let rows = golden_trace(Algorithm::Snc, &parse_pattern(TABLE_PATTERN).unwrap(), 100).unwrap();
        assert_eq!(
            sent(&rows),
            ["1", "2", "3", "4", "5", "6", "7", "1+7", "8", "9", "5+9", "10"]
        );
    }

    #[test]
    fn empty_pattern_gives_empty_trace() {
        assert!(golden_trace(Algorithm::Anc, &[], 10).unwrap().is_empty());
    }

    #[test]
    fn lossless_snc_has_no_delay() {
        let config = SimConfig::new(Algorithm::Snc, vec![0.0; 4]);
        let out = run_sim(&config, 0, &RunOptions::default()).unwrap();
        assert!(out.completed);
        assert_eq!(out.slots, 100);
        assert_eq!(out.delay_histogram, vec![400]);
        assert!(out.receivers.iter().all(|r| r.throughput() == 1.0));
    }

    #[test]
    fn horizon_guard_fires() {
        let mut config = SimConfig::new(Algorithm::Anc, vec![0.9, 0.9]);
        config.max_slots = Some(20);
        assert_eq!(
            run_sim(&config, 0, &RunOptions::default()).unwrap_err(),
            SimError::HorizonExceeded { run: 0, max_slots: 20 }
        );
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::new(Algorithm::Snct, vec![0.2; 3]);
        assert!(matches!(c.validate(), Err(SimError::Protocol(_))));
        c.threshold = Some(0);
        assert!(matches!(c.validate(), Err(SimError::Config(_))));
        c.threshold = Some(5);
        c.n_receivers = 4;
        assert!(matches!(c.validate(), Err(SimError::Config(_))));
        c.n_receivers = 3;
        c.field_bits = Some(17);
        assert!(matches!(c.validate(), Err(SimError::Field(_))));
    }

    #[test]
    fn config_json_defaults() {
        let c: SimConfig =
            serde_json::from_str(r#"{"n_receivers":2,"epsilons":[0.1,0.2],"algorithm":"snc"}"#)
                .unwrap();
        assert_eq!(c, SimConfig::new(Algorithm::Snc, vec![0.1, 0.2]));
        assert_eq!(c.field().unwrap().bits(), 1);
        assert_eq!(c.max_slots(), 20_000);
        let round: SimConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(round, c);
    }
}
