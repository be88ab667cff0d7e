//! Metrics pooled over runs. Accumulators hold exact integer counters and
//! per-run summaries sorted by run index, so merging is order-independent
//! and floating-point results do not depend on how runs were scheduled.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RunOutput;
use crate::protocol::Slot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut min, mut max) = (0usize, 0.0, f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            return Self { mean: 0.0, min: 0.0, max: 0.0 };
        }
        Self { mean: sum / n as f64, min, max }
    }
}

/// Headline numbers of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: u64,
    pub completed: bool,
    pub slots: Slot,
    /// Per receiver.
    pub throughput: Vec<f64>,
    pub throughput_global: f64,
    pub mean_delay: f64,
    pub max_delay: u32,
    pub zero_delay_fraction: f64,
    pub queue_mean: f64,
    pub queue_max: usize,
    pub lost: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct ReceiverTotals {
    decoded: u64,
    delay_sum: u64,
    max_delay: u32,
    lost: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsAccumulator {
    receivers: Vec<ReceiverTotals>,
    delay_histogram: Vec<u64>,
    queue_sum: u64,
    queue_samples: u64,
    queue_max: usize,
    chain_histogram: BTreeMap<u32, u64>,
    runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainBin {
    pub duration: u32,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverReport {
    /// One-based.
    pub receiver: usize,
    pub decoded: u64,
    pub lost: u64,
    pub mean_delay: f64,
    pub max_delay: u32,
    pub throughput: Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub runs: u64,
    pub completed_runs: u64,
    pub per_receiver: Vec<ReceiverReport>,
    /// Over every receiver of every run.
    pub throughput: Spread,
    /// Decoded packets per slot up to the last decode at any receiver.
    pub throughput_global: Spread,
    pub mean_delay: f64,
    pub max_delay: u32,
    /// Mean over runs of the largest delay in the run.
    pub mean_max_delay: f64,
    pub zero_delay_fraction: f64,
    /// `delay_cdf[d]` = fraction of packets decoded with delay at most `d`.
    /// Packets given up on count in the denominator only.
    pub delay_cdf: Vec<f64>,
    pub queue_mean: f64,
    pub queue_max: usize,
    pub chain_durations: Vec<ChainBin>,
    pub total_slots: Spread,
    pub lost_packets: u64,
    pub per_run: Vec<RunSummary>,
}

fn add_into(a: &mut Vec<u64>, b: &[u64]) {
    if a.len() < b.len() {
        a.resize(b.len(), 0);
    }
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

impl MetricsAccumulator {
    pub fn add_run(&mut self, out: &RunOutput) {
        if self.receivers.len() < out.receivers.len() {
            self.receivers.resize(out.receivers.len(), ReceiverTotals::default());
        }
        for (t, r) in self.receivers.iter_mut().zip(&out.receivers) {
            t.decoded += r.decoded;
            t.delay_sum += r.delay_sum;
            t.max_delay = t.max_delay.max(r.max_delay);
            t.lost += r.lost;
        }
        add_into(&mut self.delay_histogram, &out.delay_histogram);
        let queue_sum: u64 = out.queue_sizes.iter().map(|&q| q as u64).sum();
        let queue_max = out.queue_sizes.iter().copied().max().unwrap_or(0);
        self.queue_sum += queue_sum;
        self.queue_samples += out.queue_sizes.len() as u64;
        self.queue_max = self.queue_max.max(queue_max);
        for c in out.chains.iter().flatten() {
            *self.chain_histogram.entry(c.duration).or_default() += 1;
        }

        let decoded: u64 = out.receivers.iter().map(|r| r.decoded).sum();
        let lost: u64 = out.receivers.iter().map(|r| r.lost).sum();
        let delay_sum: u64 = out.receivers.iter().map(|r| r.delay_sum).sum();
        let last = out.last_decode_slot();
        let summary = RunSummary {
            run: out.run,
            completed: out.completed,
            slots: out.slots,
            throughput: out.receivers.iter().map(|r| r.throughput()).collect(),
            throughput_global: if last == 0 {
                0.0
            } else {
                decoded as f64 / out.receivers.len() as f64 / f64::from(last)
            },
            mean_delay: ratio(delay_sum, decoded),
            max_delay: out.max_delay(),
            zero_delay_fraction: ratio(out.delay_histogram.first().copied().unwrap_or(0), decoded + lost),
            queue_mean: ratio(queue_sum, out.queue_sizes.len() as u64),
            queue_max,
            lost,
        };
        let at = self.runs.partition_point(|s| s.run < out.run);
        self.runs.insert(at, summary);
    }

    /// Combines two accumulators; `a.merge(b) == b.merge(a)`.
    pub fn merge(mut self, other: MetricsAccumulator) -> MetricsAccumulator {
        if self.receivers.len() < other.receivers.len() {
            self.receivers.resize(other.receivers.len(), ReceiverTotals::default());
        }
        for (t, r) in self.receivers.iter_mut().zip(&other.receivers) {
            t.decoded += r.decoded;
            t.delay_sum += r.delay_sum;
            t.max_delay = t.max_delay.max(r.max_delay);
            t.lost += r.lost;
        }
        add_into(&mut self.delay_histogram, &other.delay_histogram);
        self.queue_sum += other.queue_sum;
        self.queue_samples += other.queue_samples;
        self.queue_max = self.queue_max.max(other.queue_max);
        for (d, c) in other.chain_histogram {
            *self.chain_histogram.entry(d).or_default() += c;
        }
        self.runs.extend(other.runs);
        self.runs.sort_by_key(|s| s.run);
        self
    }

    pub fn runs(&self) -> &[RunSummary] {
        &self.runs
    }

    pub fn report(&self) -> MetricsReport {
        let decoded: u64 = self.receivers.iter().map(|r| r.decoded).sum();
        let lost: u64 = self.receivers.iter().map(|r| r.lost).sum();
        let delay_sum: u64 = self.receivers.iter().map(|r| r.delay_sum).sum();
        let total = decoded + lost;
        let mut running = 0;
        let delay_cdf = self
            .delay_histogram
            .iter()
            .map(|&c| {
                running += c;
                ratio(running, total)
            })
            .collect();
        let per_receiver = self
            .receivers
            .iter()
            .enumerate()
            .map(|(i, t)| ReceiverReport {
                receiver: i + 1,
                decoded: t.decoded,
                lost: t.lost,
                mean_delay: ratio(t.delay_sum, t.decoded),
                max_delay: t.max_delay,
                throughput: Spread::of(self.runs.iter().filter_map(|s| s.throughput.get(i).copied())),
            })
            .collect();
        MetricsReport {
            runs: self.runs.len() as u64,
            completed_runs: self.runs.iter().filter(|s| s.completed).count() as u64,
            per_receiver,
            throughput: Spread::of(self.runs.iter().flat_map(|s| s.throughput.iter().copied())),
            throughput_global: Spread::of(self.runs.iter().map(|s| s.throughput_global)),
            mean_delay: ratio(delay_sum, decoded),
            max_delay: self.receivers.iter().map(|r| r.max_delay).max().unwrap_or(0),
            mean_max_delay: Spread::of(self.runs.iter().map(|s| f64::from(s.max_delay))).mean,
            zero_delay_fraction: ratio(self.delay_histogram.first().copied().unwrap_or(0), total),
            delay_cdf,
            queue_mean: ratio(self.queue_sum, self.queue_samples),
            queue_max: self.queue_max,
            chain_durations: self
                .chain_histogram
                .iter()
                .map(|(&duration, &count)| ChainBin { duration, count })
                .collect(),
            total_slots: Spread::of(self.runs.iter().map(|s| f64::from(s.slots))),
            lost_packets: lost,
            per_run: self.runs.clone(),
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Algorithm;
    use crate::sim::{run_sim, RunOptions, SimConfig};

    fn outputs() -> Vec<RunOutput> {
        let mut config = SimConfig::new(Algorithm::Snc, vec![0.25, 0.1, 0.3]);
        config.m_packets = 30;
        (0..4)
            .map(|run| run_sim(&config, run, &RunOptions::default()).unwrap())
            .collect()
    }

    #[test]
    fn merge_is_commutative() {
        let outs = outputs();
        let mut a = MetricsAccumulator::default();
        let mut b = MetricsAccumulator::default();
        a.add_run(&outs[0]);
        a.add_run(&outs[2]);
        b.add_run(&outs[3]);
        b.add_run(&outs[1]);
        let ab = a.clone().merge(b.clone());
        let ba = b.merge(a);
        assert_eq!(ab, ba);
        let mut seq = MetricsAccumulator::default();
        outs.iter().for_each(|o| seq.add_run(o));
        assert_eq!(ab.report(), seq.report());
    }

    #[test]
    fn report_invariants() {
        let mut acc = MetricsAccumulator::default();
        outputs().iter().for_each(|o| acc.add_run(o));
        let r = acc.report();
        assert_eq!(r.runs, 4);
        assert!(r.throughput.min > 0.0 && r.throughput.max <= 1.0);
        assert!(f64::from(r.max_delay) >= r.mean_delay);
        assert!(r.queue_max as f64 >= r.queue_mean);
        assert!(r.delay_cdf.windows(2).all(|w| w[0] <= w[1]));
        assert!((r.delay_cdf.last().unwrap() - 1.0).abs() < 1e-12);
        assert!((r.delay_cdf[0] - r.zero_delay_fraction).abs() < 1e-15);
        assert_eq!(r.per_receiver.iter().map(|p| p.decoded).sum::<u64>(), 4 * 3 * 30);
    }
}
