//! Sender and receiver state machines for online network coding with
//! feedback: ANC, SNC and their delay-threshold variants ANCT and SNCT.

mod feedback;
mod receiver;
mod sender;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{CodedPacket, Elem, Field, KnowledgeMatrix, PacketId};

pub use feedback::{FeedbackModel, FeedbackPolicy};
pub use receiver::{ChainRecord, DecodedPacket, DeliveryReport, ReceiverState};
pub use sender::{SenderState, Urgent};

/// Slot numbers start at 1.
pub type Slot = u32;

/// Random draws tried by [`choose_coefficients`] before the deterministic sweep.
pub const COEFFICIENT_RANDOM_DRAWS: usize = 64;
/// Candidates examined by the deterministic sweep before giving up.
pub const COEFFICIENT_SWEEP_BUDGET: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error(
        "no coefficients over GF(2^{bits}) make support {support} innovative for every target receiver"
    )]
    SearchExhausted { bits: u8, support: String },
    #[error("unknown algorithm {0:?}, expected anc, snc, anct or snct")]
    UnknownAlgorithm(String),
    #[error("{0} requires a delay threshold")]
    MissingThreshold(Algorithm),
    #[error("invalid feedback model: {0}")]
    BadFeedback(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Anc,
    Snc,
    Anct,
    Snct,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Anc, Algorithm::Anct, Algorithm::Snc, Algorithm::Snct];

    pub fn is_systematic(self) -> bool {
        matches!(self, Algorithm::Snc | Algorithm::Snct)
    }

    pub fn uses_threshold(self) -> bool {
        matches!(self, Algorithm::Anct | Algorithm::Snct)
    }

    /// Plain ANC drops packets once seen by everyone; every other variant
    /// waits until they are decoded.
    pub fn drops_when_seen(self) -> bool {
        self == Algorithm::Anc
    }

    /// The same base algorithm with or without a threshold.
    pub fn with_threshold(self, threshold: bool) -> Algorithm {
        match (self.is_systematic(), threshold) {
            (false, false) => Algorithm::Anc,
            (false, true) => Algorithm::Anct,
            (true, false) => Algorithm::Snc,
            (true, true) => Algorithm::Snct,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Anc => "anc",
            Algorithm::Snc => "snc",
            Algorithm::Anct => "anct",
            Algorithm::Snct => "snct",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name().to_uppercase())
    }
}

impl FromStr for Algorithm {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "anc" => Ok(Algorithm::Anc),
            "snc" => Ok(Algorithm::Snc),
            "anct" => Ok(Algorithm::Anct),
            "snct" => Ok(Algorithm::Snct),
            _ => Err(ProtocolError::UnknownAlgorithm(s.to_string())),
        }
    }
}

/// Static sender parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub algorithm: Algorithm,
    pub total_packets: u32,
    pub field: Field,
    /// Requests skip packets with no surviving received encoding until the
    /// receiver's received combinations are fully decoded. ANC only.
    pub deferral: bool,
    /// Delay budget in slots; required by ANCT and SNCT, ignored otherwise.
    pub threshold: Option<u32>,
    /// A deadline is in danger from `deadline - danger_margin` onwards.
    pub danger_margin: u32,
    /// Give up on (receiver, packet) pairs once their deadline has passed.
    pub discard_expired: bool,
}

impl ProtocolConfig {
    pub fn new(algorithm: Algorithm, total_packets: u32, field: Field) -> Self {
        Self {
            algorithm,
            total_packets,
            field,
            deferral: true,
            threshold: None,
            danger_margin: 0,
            discard_expired: false,
        }
    }

    pub fn active_threshold(&self) -> Option<u32> {
        if self.algorithm.uses_threshold() {
            self.threshold
        } else {
            None
        }
    }
}

/// Indices of all receivers with the maximal count; ties form a group.
pub fn leader_set(counts: &[usize]) -> Vec<usize> {
    let Some(&max) = counts.iter().max() else {
        return Vec::new();
    };
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == max)
        .map(|(i, _)| i)
        .collect()
}

/// The packet a receiver asks for next.
///
/// Without deferral this is its oldest unseen packet among those already
/// transmitted. With deferral, unseen packets that occur in some received
/// undecoded combination come first; packets whose every encoding was lost
/// wait until those combinations are decoded. When everything transmitted is
/// seen the request is the next new packet, and `None` once that would be
/// past `total`. Packets for which `skip` holds are never requested.
pub fn requested_packet(
    knowledge: &KnowledgeMatrix,
    deferral: bool,
    next_new: PacketId,
    total: u32,
    skip: impl Fn(PacketId) -> bool,
) -> Option<PacketId> {
    let pending = || knowledge.oldest_pending_unseen_where(|p| !skip(p));
    let oldest = || {
        (0..next_new.0)
            .map(PacketId)
            .find(|&p| !knowledge.is_seen(p) && !skip(p))
    };
    let requested = if deferral {
        pending().or_else(oldest)
    } else {
        oldest()
    };
    requested.or_else(|| (next_new.0 < total).then_some(next_new))
}

/// Picks nonzero coefficients over `support` so the packet is innovative for
/// every matrix in `targets`.
///
/// A singleton support is sent uncoded. Over GF(2) the only candidate is the
/// plain XOR. Otherwise up to [`COEFFICIENT_RANDOM_DRAWS`] random vectors are
/// tried, then a lexicographic sweep with the first coefficient fixed to 1.
pub fn choose_coefficients<R: Rng>(
    field: Field,
    support: &BTreeSet<PacketId>,
    targets: &[&KnowledgeMatrix],
    rng: &mut R,
) -> Result<CodedPacket, ProtocolError> {
    assert!(!support.is_empty(), "empty support");
    let packets: Vec<PacketId> = support.iter().copied().collect();
    let ok = |pkt: &CodedPacket| targets.iter().all(|k| k.is_innovative(pkt));
    let exhausted = || ProtocolError::SearchExhausted {
        bits: field.bits(),
        support: packets
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join("+"),
    };
    let build = |coeffs: &[Elem]| {
        CodedPacket::from_terms(field, packets.iter().copied().zip(coeffs.iter().copied()))
            .expect("sorted support, nonzero coefficients")
    };

    if packets.len() == 1 {
        let pkt = CodedPacket::uncoded(packets[0]);
        return if ok(&pkt) { Ok(pkt) } else { Err(exhausted()) };
    }
    if field.bits() == 1 {
        let pkt = CodedPacket::xor(packets.iter().copied());
        return if ok(&pkt) { Ok(pkt) } else { Err(exhausted()) };
    }

    let top = field.size();
    for _ in 0..COEFFICIENT_RANDOM_DRAWS {
        let coeffs: Vec<Elem> = (0..packets.len()).map(|_| rng.gen_range(1..top) as Elem).collect();
        let pkt = build(&coeffs);
        if ok(&pkt) {
            return Ok(pkt);
        }
    }

    let mut coeffs = vec![1 as Elem; packets.len()];
    for _ in 0..COEFFICIENT_SWEEP_BUDGET {
        let pkt = build(&coeffs);
        if ok(&pkt) {
            return Ok(pkt);
        }
        // Odometer over positions 1.., each digit in 1..top.
        let mut i = packets.len() - 1;
        loop {
            if i == 0 {
                return Err(exhausted());
            }
            if u32::from(coeffs[i]) + 1 < top {
                coeffs[i] += 1;
                break;
            }
            coeffs[i] = 1;
            i -= 1;
        }
    }
    Err(exhausted())
}
