use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::Slot;
use crate::field::{CodedPacket, Field, KnowledgeMatrix, PacketId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedPacket {
    pub packet: PacketId,
    pub first_tx_slot: Slot,
    pub decode_slot: Slot,
    pub delay: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryReport {
    pub innovative: bool,
    pub newly_seen: Option<PacketId>,
    pub decoded: Vec<DecodedPacket>,
}

/// One chain of undecodable combinations, from the slot it is counted from
/// to the slot whose reception made it decodable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRecord {
    /// The erasure that marked the chain, or the break of the preceding
    /// chain if that came later.
    pub start_slot: Slot,
    pub break_slot: Slot,
    /// Slots strictly between `start_slot` and `break_slot`.
    pub duration: u32,
    /// Largest number of undecoded combinations held during the chain.
    pub size: usize,
    /// Started right after a preceding chain broke rather than at its erasure.
    pub queued: bool,
    /// The marking erasure hit a receiver with no chain and no pending marks.
    pub from_idle: bool,
}

#[derive(Debug, Clone, Copy)]
struct Mark {
    slot: Slot,
    idle: bool,
}

#[derive(Debug, Clone, Copy)]
struct ActiveChain {
    start_slot: Slot,
    queued: bool,
    from_idle: bool,
    size: usize,
}

/// A receiver's true state.
#[derive(Debug, Clone)]
pub struct ReceiverState {
    knowledge: KnowledgeMatrix,
    received_count: usize,
    decode_slot: BTreeMap<PacketId, Slot>,
    marks: VecDeque<Mark>,
    active: Option<ActiveChain>,
    last_break: Option<Slot>,
    chains: Vec<ChainRecord>,
}

impl ReceiverState {
    pub fn new(field: Field) -> Self {
        Self {
            knowledge: KnowledgeMatrix::new(field),
            received_count: 0,
            decode_slot: BTreeMap::new(),
            marks: VecDeque::new(),
            active: None,
            last_break: None,
            chains: Vec::new(),
        }
    }

    pub fn knowledge(&self) -> &KnowledgeMatrix {
        &self.knowledge
    }

    /// Packets received (not erased), innovative or not.
    pub fn received_count(&self) -> usize {
        self.received_count
    }

    /// Innovative receptions, i.e. the rank of the knowledge matrix.
    pub fn innovative_count(&self) -> usize {
        self.knowledge.rank()
    }

    pub fn decode_slot(&self) -> &BTreeMap<PacketId, Slot> {
        &self.decode_slot
    }

    /// Received combinations whose seen packet is not yet decoded.
    pub fn current_chain(&self) -> Vec<CodedPacket> {
        self.knowledge.pending().collect()
    }

    pub fn pending_marks(&self) -> usize {
        self.marks.len()
    }

    pub fn chains(&self) -> &[ChainRecord] {
        &self.chains
    }

    /// `(duration, size)` of every completed chain.
    pub fn chain_lengths(&self) -> Vec<(u32, usize)> {
        self.chains.iter().map(|c| (c.duration, c.size)).collect()
    }

    /// Adds a received packet. Delay is measured from the first slot in which
    /// any encoding of the packet was sent.
    pub fn deliver(
        &mut self,
        packet: &CodedPacket,
        slot: Slot,
        first_tx_slot: &[Option<Slot>],
    ) -> DeliveryReport {
        self.received_count += 1;
        let ins = self.knowledge.insert(packet);
        let decoded = ins
            .newly_decoded
            .iter()
            .map(|&p| {
                let first = first_tx_slot[p.index()].expect("decoded packet was transmitted");
                self.decode_slot.insert(p, slot);
                DecodedPacket {
                    packet: p,
                    first_tx_slot: first,
                    decode_slot: slot,
                    delay: slot - first,
                }
            })
            .collect();
        DeliveryReport {
            innovative: ins.innovative,
            newly_seen: ins.newly_seen,
            decoded,
        }
    }

    /// Records an erasure. Each erasure marks a future chain while the
    /// receiver still has packets to decode.
    pub fn erase(&mut self, slot: Slot, total_packets: u32) {
        if self.knowledge.decoded_count() < total_packets as usize {
            let idle = self.active.is_none() && self.marks.is_empty();
            self.marks.push_back(Mark { slot, idle });
        }
    }

    /// Chain bookkeeping at the end of a slot, after this slot's delivery or
    /// erasure. `transmitted` is the number of distinct packets sent so far.
    pub fn end_slot(&mut self, slot: Slot, transmitted: usize) {
        let rows = self.knowledge.pending_rows();
        if let Some(chain) = self.active.as_mut() {
            if rows == 0 {
                self.chains.push(ChainRecord {
                    start_slot: chain.start_slot,
                    break_slot: slot,
                    duration: slot - chain.start_slot - 1,
                    size: chain.size,
                    queued: chain.queued,
                    from_idle: chain.from_idle,
                });
                self.active = None;
                self.last_break = Some(slot);
            } else {
                chain.size = chain.size.max(rows);
            }
        } else if rows > 0 {
            let mark = self.marks.pop_front();
            let marked = mark.map_or(slot.saturating_sub(1), |m| m.slot);
            let after_break = self.last_break.is_some_and(|b| b > marked);
            self.active = Some(ActiveChain {
                start_slot: if after_break { self.last_break.unwrap() } else { marked },
                queued: after_break,
                from_idle: mark.is_some_and(|m| m.idle),
                size: rows,
            });
        }
        // An erasure that cost no degree of freedom (the lost packet carried
        // nothing new) leaves no mark behind.
        let deficit = transmitted.saturating_sub(self.knowledge.rank());
        let allowed = deficit.saturating_sub(usize::from(self.active.is_some()));
        while self.marks.len() > allowed {
            self.marks.pop_back();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u32) -> PacketId {
        PacketId(n - 1)
    }

    #[test]
    fn same_slot_decode_has_zero_delay() {
        let mut r = ReceiverState::new(Field::gf2());
        let first = vec![Some(1)];
        let rep = r.deliver(&CodedPacket::uncoded(p(1)), 1, &first);
        assert!(rep.innovative);
        assert_eq!(rep.decoded[0].delay, 0);
        r.end_slot(1, 1);
        assert!(r.chain_lengths().is_empty());
    }

    #[test]
    fn non_innovative_still_counts_as_received() {
        let mut r = ReceiverState::new(Field::gf2());
        let first = vec![Some(1)];
        r.deliver(&CodedPacket::uncoded(p(1)), 1, &first);
        let rep = r.deliver(&CodedPacket::uncoded(p(1)), 2, &first);
        assert_eq!(rep, DeliveryReport::default());
        assert_eq!(r.received_count(), 2);
        assert_eq!(r.innovative_count(), 1);
    }

    #[test]
    fn no_erasures_no_chains() {
        let mut r = ReceiverState::new(Field::gf2());
        let first: Vec<Option<Slot>> = (1..=5).map(Some).collect();
        for n in 1..=5 {
            r.deliver(&CodedPacket::uncoded(p(n)), n, &first);
            r.end_slot(n, n as usize);
        }
        assert!(r.chain_lengths().is_empty());
        assert_eq!(r.pending_marks(), 0);
    }

    #[test]
    fn chain_from_erasure_to_break() {
        // Receiver 2 of the two-receiver ANC example, slots 1..8.
        let mut r = ReceiverState::new(Field::gf2());
        let first: Vec<Option<Slot>> = vec![Some(1), Some(2), Some(3), Some(4), Some(5), Some(6), Some(7)];
        let sent: [&[u32]; 8] = [&[1], &[1, 2], &[2, 3], &[3, 4], &[4, 5], &[4, 6], &[6, 7], &[7]];
        let erased = [true, false, false, false, true, false, false, false];
        let transmitted = [1, 2, 3, 4, 5, 6, 7, 7];
        for (i, s) in sent.iter().enumerate() {
            let slot = i as Slot + 1;
            if erased[i] {
                r.erase(slot, 100);
            } else {
                r.deliver(&CodedPacket::xor(s.iter().map(|&n| p(n))), slot, &first);
            }
            r.end_slot(slot, transmitted[i]);
            if slot == 7 {
                assert_eq!(r.current_chain().len(), 5);
            }
        }
        assert_eq!(r.chains().len(), 1);
        let c = r.chains()[0];
        assert_eq!((c.start_slot, c.break_slot, c.duration, c.size), (1, 8, 6, 5));
        assert!(c.from_idle && !c.queued);
        assert_eq!(r.decode_slot()[&p(1)], 8);
        // The slot-5 erasure is still waiting to start the next chain.
        assert_eq!(r.pending_marks(), 1);
    }
}
