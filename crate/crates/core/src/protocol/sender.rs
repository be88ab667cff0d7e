use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::feedback::Beliefs;
use super::{
    choose_coefficients, leader_set, requested_packet, FeedbackModel, ProtocolConfig,
    ProtocolError, ReceiverState, Slot,
};
use crate::channel::ReceptionBitmap;
use crate::field::{CodedPacket, KnowledgeMatrix, PacketId};

/// A packet being repeated uncoded for the receivers whose deadline for it
/// is in danger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Urgent {
    pub packet: PacketId,
    pub receivers: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct SenderState {
    config: ProtocolConfig,
    next_new: PacketId,
    queue: BTreeSet<PacketId>,
    beliefs: Beliefs,
    repair_pending: bool,
    urgent: Option<Urgent>,
    first_tx_slot: Vec<Option<Slot>>,
    rng: ChaCha8Rng,
}

impl SenderState {
    pub fn new(
        config: ProtocolConfig,
        receivers: usize,
        feedback: FeedbackModel,
        protocol_rng: ChaCha8Rng,
        feedback_rng: ChaCha8Rng,
    ) -> Result<Self, ProtocolError> {
        if config.algorithm.uses_threshold() && config.threshold.is_none() {
            return Err(ProtocolError::MissingThreshold(config.algorithm));
        }
        feedback.validate()?;
        Ok(Self {
            beliefs: Beliefs::new(feedback, config.field, receivers, feedback_rng),
            first_tx_slot: vec![None; config.total_packets as usize],
            next_new: PacketId(0),
            queue: BTreeSet::new(),
            repair_pending: false,
            urgent: None,
            rng: protocol_rng,
            config,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn next_new(&self) -> PacketId {
        self.next_new
    }

    /// Distinct packets transmitted so far.
    pub fn transmitted_count(&self) -> usize {
        self.next_new.index()
    }

    pub fn queue(&self) -> &BTreeSet<PacketId> {
        &self.queue
    }

    pub fn mirrors(&self) -> &[KnowledgeMatrix] {
        self.beliefs.mirrors()
    }

    pub fn first_tx_slots(&self) -> &[Option<Slot>] {
        &self.first_tx_slot
    }

    pub fn repair_pending(&self) -> bool {
        self.repair_pending
    }

    pub fn urgent(&self) -> Option<&Urgent> {
        self.urgent.as_ref()
    }

    fn deadline(&self, packet: PacketId) -> Option<Slot> {
        deadline(&self.config, &self.first_tx_slot, packet)
    }

    /// `packet` is past its deadline at `slot` and `discard_expired` gives
    /// up on it.
    pub fn is_expired(&self, packet: PacketId, slot: Slot) -> bool {
        expired(&self.config, &self.first_tx_slot, packet, slot)
    }

    fn receiver_done(&self, receiver: usize, slot: Slot) -> bool {
        let m = &self.mirrors()[receiver];
        (0..self.config.total_packets)
            .map(PacketId)
            .all(|p| m.is_decoded(p) || self.is_expired(p, slot))
    }

    /// Everything is decoded (or expired) according to the sender's beliefs.
    pub fn believes_done(&self, slot: Slot) -> bool {
        (0..self.mirrors().len()).all(|i| self.receiver_done(i, slot))
    }

    /// Chooses this slot's transmission; `None` leaves the slot idle.
    pub fn select(&mut self, slot: Slot) -> Result<Option<CodedPacket>, ProtocolError> {
        let pkt = match self.threshold_pick(slot) {
            Some(p) => Some(CodedPacket::uncoded(p)),
            None if self.config.algorithm.is_systematic() => self.snc_select(slot)?,
            None => self.anc_select(slot)?,
        };
        if let Some(pkt) = &pkt {
            for p in pkt.support() {
                self.first_tx_slot[p.index()].get_or_insert(slot);
                self.queue.insert(p);
                if p >= self.next_new {
                    self.next_new = p.next();
                }
            }
        }
        Ok(pkt)
    }

    fn anc_select(&mut self, slot: Slot) -> Result<Option<CodedPacket>, ProtocolError> {
        self.coded(slot, self.config.deferral)
    }

    fn snc_select(&mut self, slot: Slot) -> Result<Option<CodedPacket>, ProtocolError> {
        if self.repair_pending {
            self.repair_pending = false;
            if let Some(pkt) = self.coded(slot, false)? {
                return Ok(Some(pkt));
            }
        }
        if self.next_new.0 < self.config.total_packets {
            return Ok(Some(CodedPacket::uncoded(self.next_new)));
        }
        self.coded(slot, false)
    }

    /// Combination of every (non-ignored) receiver's requested packet. A
    /// systematic sender only sends new packets uncoded, so receivers that
    /// have seen everything transmitted contribute nothing.
    fn coded(&mut self, slot: Slot, deferral: bool) -> Result<Option<CodedPacket>, ProtocolError> {
        let (config, first_tx) = (&self.config, &self.first_tx_slot);
        let mut support = BTreeSet::new();
        let mut targets = Vec::new();
        for (i, mirror) in self.beliefs.mirrors().iter().enumerate() {
            if self.beliefs.is_ignored(i) {
                continue;
            }
            let request = requested_packet(
                mirror,
                deferral,
                self.next_new,
                config.total_packets,
                |p| expired(config, first_tx, p, slot),
            );
            let request = request.filter(|&p| !config.algorithm.is_systematic() || p < self.next_new);
            if let Some(p) = request {
                support.insert(p);
                targets.push(mirror);
            }
        }
        if support.is_empty() {
            return Ok(None);
        }
        choose_coefficients(self.config.field, &support, &targets, &mut self.rng).map(Some)
    }

    /// The packet to send uncoded because some receiver's deadline for it is
    /// in danger, if any.
    fn threshold_pick(&mut self, slot: Slot) -> Option<PacketId> {
        self.config.active_threshold()?;
        if let Some(u) = &self.urgent {
            return Some(u.packet);
        }
        let margin = self.config.danger_margin;
        let in_danger = |p: PacketId| {
            let deadline = self.deadline(p).expect("queued packets were transmitted");
            slot + margin >= deadline && !self.is_expired(p, slot)
        };
        let lacking = |p: PacketId| -> BTreeSet<usize> {
            (0..self.mirrors().len())
                .filter(|&i| !self.beliefs.is_ignored(i) && !self.mirrors()[i].is_decoded(p))
                .collect()
        };
        let candidates: Vec<Urgent> = self
            .queue
            .iter()
            .filter(|&&p| in_danger(p))
            .map(|&p| Urgent {
                packet: p,
                receivers: lacking(p),
            })
            .filter(|u| !u.receivers.is_empty())
            .collect();
        let urgent = candidates.choose(&mut self.rng)?.clone();
        let packet = urgent.packet;
        self.urgent = Some(urgent);
        Some(packet)
    }

    /// End-of-slot feedback: updates beliefs, the repair trigger and the
    /// urgent packet, then drops finished packets. Returns the dropped set.
    pub fn feedback(
        &mut self,
        slot: Slot,
        sent: Option<&CodedPacket>,
        bitmap: &ReceptionBitmap,
        truth: &[ReceiverState],
    ) -> BTreeSet<PacketId> {
        self.beliefs.update(slot, sent, bitmap, truth);

        // Leaders are taken after this slot's receptions: a leader that lost
        // the packet is still a leader only if no other leader received it.
        // Leadership counts innovative receptions, so repeated urgent copies
        // do not make a receiver look ahead.
        if self.config.algorithm.is_systematic() && sent.is_some() {
            let leaders = leader_set(&self.beliefs.ranks());
            if leaders.iter().any(|&i| !self.beliefs.last_ok(i)) {
                self.repair_pending = true;
            }
        }

        if let Some(mut u) = self.urgent.take() {
            let next = slot + 1;
            if !self.is_expired(u.packet, next) {
                u.receivers
                    .retain(|&i| !self.mirrors()[i].is_decoded(u.packet) && !self.beliefs.is_ignored(i));
                if !u.receivers.is_empty() {
                    self.urgent = Some(u);
                }
            }
        }

        self.queue_update(slot + 1)
    }

    /// Drops queue entries no receiver needs any more, as of `slot`.
    fn queue_update(&mut self, slot: Slot) -> BTreeSet<PacketId> {
        let mirrors = self.mirrors();
        let finished = |p: PacketId| {
            if self.config.algorithm.drops_when_seen() {
                mirrors.iter().all(|m| m.is_seen(p))
            } else {
                mirrors.iter().all(|m| m.is_decoded(p)) || self.is_expired(p, slot)
            }
        };
        let dropped: BTreeSet<PacketId> = self.queue.iter().copied().filter(|&p| finished(p)).collect();
        for p in &dropped {
            self.queue.remove(p);
        }
        dropped
    }
}

fn deadline(config: &ProtocolConfig, first_tx: &[Option<Slot>], packet: PacketId) -> Option<Slot> {
    let threshold = config.active_threshold()?;
    first_tx[packet.index()].map(|s| s + threshold)
}

/// Past its deadline, and `discard_expired` says to give up on it.
fn expired(config: &ProtocolConfig, first_tx: &[Option<Slot>], packet: PacketId, slot: Slot) -> bool {
    config.discard_expired && deadline(config, first_tx, packet).is_some_and(|d| slot > d)
}
