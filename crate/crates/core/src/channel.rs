//! Independent packet-erasure channels, one per receiver.
//!
//! Each slot draws one uniform number per receiver in receiver order, so a
//! seed fully determines the reception sequence. A channel set can instead
//! replay a fixed OK/E pattern, one line per slot.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("erasure probability {value} for receiver {receiver} is outside [0, 1)")]
    BadEpsilon { receiver: usize, value: f64 },
    #[error("need at least one receiver")]
    NoReceivers,
    #[error("length mismatch: bitmap has {bitmap} receivers, epsilon vector has {epsilons}")]
    LengthMismatch { bitmap: usize, epsilons: usize },
    #[error("pattern line {line}: {reason}")]
    Pattern { line: usize, reason: String },
}

/// Per-receiver outcome of one slot: `true` = received (OK), `false` = erased (E).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReceptionBitmap(pub Vec<bool>);

impl ReceptionBitmap {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn received(&self, receiver: usize) -> bool {
        self.0[receiver]
    }

    pub fn all_ok(n: usize) -> Self {
        Self(vec![true; n])
    }

    /// The `index`-th of the `2^n` bitmaps; bit `n - 1 - i` set means receiver
    /// `i` erased, so index 0 is all OK and receiver 0 is the most significant.
    pub fn from_index(index: usize, n: usize) -> Self {
        Self((0..n).map(|i| index >> (n - 1 - i) & 1 == 0).collect())
    }
}

impl fmt::Display for ReceptionBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, ok) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(if *ok { "OK" } else { "E" })?;
        }
        Ok(())
    }
}

impl FromStr for ReceptionBitmap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|tok| match tok.trim() {
                "OK" => Ok(true),
                "E" => Ok(false),
                other => Err(format!("unknown token {other:?}, expected OK or E")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ReceptionBitmap)
    }
}

/// Parses a pattern file. Blank lines and lines starting with `#` are skipped.
pub fn parse_pattern(text: &str) -> Result<Vec<ReceptionBitmap>, ChannelError> {
    let mut out: Vec<ReceptionBitmap> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bitmap: ReceptionBitmap = line.parse().map_err(|reason| ChannelError::Pattern {
            line: i + 1,
            reason,
        })?;
        if let Some(first) = out.first() {
            if first.len() != bitmap.len() {
                return Err(ChannelError::Pattern {
                    line: i + 1,
                    reason: format!("expected {} receivers, found {}", first.len(), bitmap.len()),
                });
            }
        }
        out.push(bitmap);
    }
    Ok(out)
}

pub fn format_pattern(pattern: &[ReceptionBitmap]) -> String {
    pattern.iter().map(|b| format!("{b}\n")).collect()
}

pub fn validate_epsilons(epsilons: &[f64]) -> Result<(), ChannelError> {
    if epsilons.is_empty() {
        return Err(ChannelError::NoReceivers);
    }
    for (receiver, &value) in epsilons.iter().enumerate() {
        if !(0.0..1.0).contains(&value) {
            return Err(ChannelError::BadEpsilon { receiver, value });
        }
    }
    Ok(())
}

/// Probability of observing `bitmap` in a slot: product of `ε_i` over erased
/// receivers and `1 - ε_i` over receiving ones.
pub fn event_probability(bitmap: &ReceptionBitmap, epsilons: &[f64]) -> Result<f64, ChannelError> {
    if bitmap.len() != epsilons.len() {
        return Err(ChannelError::LengthMismatch {
            bitmap: bitmap.len(),
            epsilons: epsilons.len(),
        });
    }
    Ok(bitmap
        .0
        .iter()
        .zip(epsilons)
        .map(|(&ok, &e)| if ok { 1.0 - e } else { e })
        .product())
}

#[derive(Debug, Clone)]
enum Source {
    Random { epsilons: Vec<f64>, rng: ChaCha8Rng },
    Replay { pattern: Vec<ReceptionBitmap>, next: usize },
}

/// The set of erasure channels from the sender to every receiver.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    receivers: usize,
    source: Source,
}

impl ChannelSet {
    pub fn random(epsilons: Vec<f64>, rng: ChaCha8Rng) -> Result<Self, ChannelError> {
        validate_epsilons(&epsilons)?;
        Ok(Self {
            receivers: epsilons.len(),
            source: Source::Random { epsilons, rng },
        })
    }

    pub fn replay(receivers: usize, pattern: Vec<ReceptionBitmap>) -> Result<Self, ChannelError> {
        if receivers == 0 {
            return Err(ChannelError::NoReceivers);
        }
        if let Some(line) = pattern.iter().position(|b| b.len() != receivers) {
            return Err(ChannelError::Pattern {
                line: line + 1,
                reason: format!("expected {receivers} receivers, found {}", pattern[line].len()),
            });
        }
        Ok(Self {
            receivers,
            source: Source::Replay { pattern, next: 0 },
        })
    }

    pub fn receivers(&self) -> usize {
        self.receivers
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.source, Source::Replay { .. })
    }

    /// Outcome of the next slot; `None` once a replayed pattern is exhausted.
    pub fn sample_slot(&mut self) -> Option<ReceptionBitmap> {
        match &mut self.source {
            Source::Random { epsilons, rng } => Some(ReceptionBitmap(
                epsilons.iter().map(|&e| rng.gen::<f64>() >= e).collect(),
            )),
            Source::Replay { pattern, next } => {
                let b = pattern.get(*next).cloned();
                *next += 1;
                b
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn random(eps: &[f64], seed: u64) -> ChannelSet {
        ChannelSet::random(eps.to_vec(), stream(seed, 0, Purpose::Channel)).unwrap()
    }

    #[test]
    fn lossless_channels_always_deliver() {
        let mut ch = random(&[0.0, 0.0, 0.0], 1);
        for _ in 0..1000 {
            assert_eq!(ch.sample_slot().unwrap(), ReceptionBitmap::all_ok(3));
        }
    }

    #[test]
    fn near_one_erasure_is_almost_sure() {
        let mut ch = random(&[1.0 - 1e-12], 3);
        assert!((0..1000).all(|_| !ch.sample_slot().unwrap().received(0)));
    }

    #[test]
    fn rejects_out_of_range_epsilon() {
        assert!(matches!(
            ChannelSet::random(vec![0.2, 1.0], stream(0, 0, Purpose::Channel)),
            Err(ChannelError::BadEpsilon { receiver: 1, .. })
        ));
        assert!(matches!(
            ChannelSet::random(vec![], stream(0, 0, Purpose::Channel)),
            Err(ChannelError::NoReceivers)
        ));
    }

    #[test]
    fn table_two_event_probabilities() {
        let eps = [0.25, 0.2];
        let a = event_probability(&"OK,OK".parse().unwrap(), &eps).unwrap();
        let b = event_probability(&"OK,E".parse().unwrap(), &eps).unwrap();
        assert!((a - 0.60).abs() < 1e-15);
        assert!((b - 0.15).abs() < 1e-15);
        assert!(matches!(
            event_probability(&"OK".parse().unwrap(), &eps),
            Err(ChannelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn event_probabilities_sum_to_one() {
        let eps = [0.25, 0.2, 0.1, 0.4, 0.05];
        for n in 1..=eps.len() {
            let total: f64 = (0..1 << n)
                .map(|i| event_probability(&ReceptionBitmap::from_index(i, n), &eps[..n]).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n}: {total}");
        }
    }

    #[test]
    fn both_erased_frequency_within_three_sigma() {
        let mut ch = random(&[0.25, 0.25], 11);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| ch.sample_slot().unwrap().0 == [false, false])
            .count();
        let p = 0.0625;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = hits as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn chi_square_over_all_joint_events() {
        let eps = [0.25, 0.2, 0.1];
        let mut ch = random(&eps, 5);
        let n = 1_000_000usize;
        let mut counts = [0usize; 8];
        for _ in 0..n {
            let b = ch.sample_slot().unwrap();
            let idx = b.0.iter().fold(0, |acc, &ok| acc << 1 | usize::from(!ok));
            counts[idx] += 1;
        }
        let chi2: f64 = (0..8)
            .map(|i| {
                let expected =
                    n as f64 * event_probability(&ReceptionBitmap::from_index(i, 3), &eps).unwrap();
                (counts[i] as f64 - expected).powi(2) / expected
            })
            .sum();
        // 7 degrees of freedom, 99.9% quantile.
        assert!(chi2 < 24.32, "chi2 = {chi2}");
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = random(&[0.3, 0.1], 42);
        let mut b = random(&[0.3, 0.1], 42);
        for _ in 0..500 {
            assert_eq!(a.sample_slot(), b.sample_slot());
        }
    }

    #[test]
    fn pattern_round_trip_and_replay() {
        let text = "# table\nOK,E\nOK,OK\n\nE,OK\n";
        let pattern = parse_pattern(text).unwrap();
        assert_eq!(pattern.len(), 3);
        assert_eq!(format_pattern(&pattern), "OK,E\nOK,OK\nE,OK\n");
        let mut ch = ChannelSet::replay(2, pattern).unwrap();
        assert!(ch.is_replay());
        assert_eq!(ch.sample_slot().unwrap().to_string(), "OK,E");
        ch.sample_slot();
        ch.sample_slot();
        assert_eq!(ch.sample_slot(), None);
    }

    #[test]
    fn pattern_errors() {
        assert!(matches!(parse_pattern("OK,X"), Err(ChannelError::Pattern { line: 1, .. })));
        assert!(matches!(parse_pattern("OK,E\nOK"), Err(ChannelError::Pattern { line: 2, .. })));
        assert!(ChannelSet::replay(3, parse_pattern("OK,E").unwrap()).is_err());
    }
}
