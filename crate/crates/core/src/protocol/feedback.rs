//! What the sender believes each receiver holds.
//!
//! Under perfect feedback every receiver reports its outcome at the end of
//! the slot and the sender's mirrors equal the true knowledge. Under lossy
//! feedback each per-slot report carries the receiver's full state, is lost
//! with probability `fb_loss` and otherwise arrives `fb_delay` slots later.
//! Slots not yet covered by an arrived report are filled in by the policy.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ProtocolError, ReceiverState, Slot};
use crate::channel::ReceptionBitmap;
use crate::field::{CodedPacket, Field, KnowledgeMatrix};

/// How the sender fills in slots whose report is missing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackPolicy {
    /// Assume the packet was received.
    Optimistic,
    /// Assume the packet was lost.
    Pessimistic,
    /// Assume received with probability `q`, drawn once per slot and receiver.
    Random { q: f64 },
    /// Leave the receiver out of coding decisions until a report arrives.
    Ignore,
}

impl fmt::Display for FeedbackPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackPolicy::Optimistic => f.write_str("optimistic"),
            FeedbackPolicy::Pessimistic => f.write_str("pessimistic"),
            FeedbackPolicy::Random { q } => write!(f, "random:{q}"),
            FeedbackPolicy::Ignore => f.write_str("ignore"),
        }
    }
}

impl FromStr for FeedbackPolicy {
    type Err = ProtocolError;

    /// `optimistic`, `pessimistic`, `ignore` or `random:<q>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ProtocolError::BadFeedback(format!("unknown policy {s:?}"));
        match s.to_ascii_lowercase().as_str() {
            "optimistic" => Ok(FeedbackPolicy::Optimistic),
            "pessimistic" => Ok(FeedbackPolicy::Pessimistic),
            "ignore" => Ok(FeedbackPolicy::Ignore),
            other => {
                let q: f64 = other
                    .strip_prefix("random:")
                    .ok_or_else(bad)?
                    .parse()
                    .map_err(|_| bad())?;
                Ok(FeedbackPolicy::Random { q })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeedbackModel {
    #[default]
    Perfect,
    Lossy {
        fb_loss: f64,
        fb_delay: u32,
        policy: FeedbackPolicy,
    },
}

impl FeedbackModel {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if let FeedbackModel::Lossy {
            fb_loss, policy, ..
        } = self
        {
            if !(0.0..=1.0).contains(fb_loss) {
                return Err(ProtocolError::BadFeedback(format!(
                    "fb_loss {fb_loss} outside [0, 1]"
                )));
            }
            if let FeedbackPolicy::Random { q } = policy {
                if !(0.0..=1.0).contains(q) {
                    return Err(ProtocolError::BadFeedback(format!("q {q} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn is_perfect(&self) -> bool {
        matches!(self, FeedbackModel::Perfect)
    }
}

#[derive(Debug, Clone)]
struct Report {
    source_slot: Slot,
    arrival_slot: Slot,
    /// `None` when the report was lost.
    snapshot: Option<KnowledgeMatrix>,
}

#[derive(Debug, Clone)]
struct LossyView {
    base: KnowledgeMatrix,
    base_slot: Slot,
    in_flight: VecDeque<Report>,
    guesses: BTreeMap<Slot, bool>,
}

/// The sender's per-receiver view, updated once per slot.
#[derive(Debug, Clone)]
pub(crate) struct Beliefs {
    model: FeedbackModel,
    mirrors: Vec<KnowledgeMatrix>,
    /// Believed outcome of the most recent slot.
    last_ok: Vec<bool>,
    ignored: Vec<bool>,
    views: Vec<LossyView>,
    /// Transmission of slot `s` at index `s - 1`.
    log: Vec<Option<CodedPacket>>,
    rng: ChaCha8Rng,
}

impl Beliefs {
    pub(crate) fn new(model: FeedbackModel, field: Field, receivers: usize, rng: ChaCha8Rng) -> Self {
        let empty = KnowledgeMatrix::new(field);
        let views = if model.is_perfect() {
            Vec::new()
        } else {
            vec![
                LossyView {
                    base: empty.clone(),
                    base_slot: 0,
                    in_flight: VecDeque::new(),
                    guesses: BTreeMap::new(),
                };
                receivers
            ]
        };
        Self {
            model,
            mirrors: vec![empty; receivers],
            last_ok: vec![true; receivers],
            ignored: vec![false; receivers],
            views,
            log: Vec::new(),
            rng,
        }
    }

    pub(crate) fn mirrors(&self) -> &[KnowledgeMatrix] {
        &self.mirrors
    }

    /// Believed innovative receptions per receiver.
    pub(crate) fn ranks(&self) -> Vec<usize> {
        self.mirrors.iter().map(KnowledgeMatrix::rank).collect()
    }

    pub(crate) fn last_ok(&self, receiver: usize) -> bool {
        self.last_ok[receiver]
    }

    pub(crate) fn is_ignored(&self, receiver: usize) -> bool {
        self.ignored[receiver]
    }

    /// End-of-slot update after the receivers processed `sent`.
    pub(crate) fn update(
        &mut self,
        slot: Slot,
        sent: Option<&CodedPacket>,
        bitmap: &ReceptionBitmap,
        truth: &[ReceiverState],
    ) {
        let FeedbackModel::Lossy {
            fb_loss,
            fb_delay,
            policy,
        } = self.model
        else {
            for (i, mirror) in self.mirrors.iter_mut().enumerate() {
                let ok = sent.is_some() && bitmap.received(i);
                if let (true, Some(pkt)) = (ok, sent) {
                    mirror.insert(pkt);
                }
                self.last_ok[i] = ok || sent.is_none();
            }
            return;
        };

        self.log.push(sent.cloned());
        for i in 0..self.mirrors.len() {
            let lost = self.rng.gen::<f64>() < fb_loss;
            let snapshot = (!lost).then(|| truth[i].knowledge().clone());
            let view = &mut self.views[i];
            view.in_flight.push_back(Report {
                source_slot: slot,
                arrival_slot: slot + fb_delay,
                snapshot,
            });

            let mut rebuilt = false;
            while view.in_flight.front().is_some_and(|r| r.arrival_slot <= slot) {
                let report = view.in_flight.pop_front().expect("front checked");
                self.ignored[i] = policy == FeedbackPolicy::Ignore && report.snapshot.is_none();
                if let Some(knowledge) = report.snapshot {
                    view.base = knowledge;
                    view.base_slot = report.source_slot;
                    rebuilt = true;
                }
            }
            if rebuilt {
                let base_slot = view.base_slot;
                view.guesses.retain(|&s, _| s > base_slot);
                self.mirrors[i] = view.base.clone();
                self.last_ok[i] = true;
                for s in base_slot + 1..=slot {
                    self.guess(i, s, policy);
                }
                if base_slot == slot {
                    self.last_ok[i] = sent.is_none() || bitmap.received(i);
                }
            } else {
                self.guess(i, slot, policy);
            }
        }
    }

    /// Applies the policy's assumption about slot `s` to receiver `i`.
    fn guess(&mut self, i: usize, s: Slot, policy: FeedbackPolicy) {
        let Some(pkt) = &self.log[s as usize - 1] else {
            self.last_ok[i] = true;
            return;
        };
        let received = match policy {
            FeedbackPolicy::Optimistic => true,
            FeedbackPolicy::Pessimistic | FeedbackPolicy::Ignore => false,
            FeedbackPolicy::Random { q } => {
                let rng = &mut self.rng;
                *self.views[i].guesses.entry(s).or_insert_with(|| rng.gen::<f64>() < q)
            }
        };
        if received {
            self.mirrors[i].insert(pkt);
        }
        self.last_ok[i] = received;
    }
}
