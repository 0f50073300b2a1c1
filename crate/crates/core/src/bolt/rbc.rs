//! Sequential PRBC fastlane: the leader broadcasts slot s+1 only after slot s
//! finalized, and every party holds back slot s+1 traffic until it has
//! finalized slot s itself.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::bolt::prbc::{Prbc, PrbcOutput};
use crate::bolt::prbc_done_message;
use crate::crypto::{CombinedSig, PartyKeys};
use crate::message::{Message, PrbcMsg};
use crate::sim::Outbox;
use crate::types::{decode_txs, encode_txs, txs_digest, Block, QuorumProof, Tx};
use crate::wire::Reader;
use crate::{Epoch, PartyId, Slot};

#[derive(Debug)]
pub struct RbcLane {
    epoch: Epoch,
    me: PartyId,
    leader: PartyId,
    keys: Arc<PartyKeys>,
    max_slot: Slot,
    abandoned: bool,
    equivocate: bool,
    current: Slot,
    instance: Option<Prbc>,
    payload: Option<Vec<u8>>,
    proof: Option<CombinedSig>,
    buffered: BTreeMap<Slot, Vec<(PartyId, PrbcMsg)>>,
    delivered: Slot,
    started: Slot,
    evidence: Vec<String>,
}

impl RbcLane {
    pub fn new(epoch: Epoch, leader: PartyId, keys: Arc<PartyKeys>, max_slot: Slot) -> Self {
        let mut lane = RbcLane {
            epoch,
            me: keys.party,
            leader,
            keys,
            max_slot,
            abandoned: false,
            equivocate: false,
            current: 1,
            instance: None,
            payload: None,
            proof: None,
            buffered: BTreeMap::new(),
            delivered: 0,
            started: 0,
            evidence: Vec::new(),
        };
        lane.instance = Some(lane.new_instance(1));
        lane
    }

    pub fn with_equivocation(mut self, on: bool) -> Self {
        self.equivocate = on;
        self
    }

    fn new_instance(&self, slot: Slot) -> Prbc {
        Prbc::new(self.leader, self.keys.clone(), Some(prbc_done_message(self.epoch, slot)))
    }

    pub fn is_leader(&self) -> bool {
        self.me == self.leader
    }

    pub fn delivered(&self) -> Slot {
        self.delivered
    }

    pub fn evidence(&self) -> &[String] {
        &self.evidence
    }

    pub fn next_proposal(&self, cap: Slot) -> Option<Slot> {
        let limit = cap.min(self.max_slot);
        (self.is_leader() && !self.abandoned && self.started == self.delivered && self.started < limit).then_some(self.started + 1)
    }

    /// Leader only: starts the next slot's broadcast.
    pub fn propose(&mut self, txs: Vec<Tx>, out: &mut Outbox<Message>) {
        self.started += 1;
        let slot = self.started;
        debug_assert_eq!(slot, self.current);
        let payload = encode_txs(&txs);
        let mut inner = Outbox::new();
        let instance = self.instance.as_ref().expect("current instance");
        if self.equivocate {
            let mut alt = txs.clone();
            alt.reverse();
            alt.push(Tx::new(u64::MAX - slot, crate::types::MIN_TX_SIZE));
            let n = self.keys.public().n();
            instance.broadcast_split(&payload, &encode_txs(&alt), n / 2 + 1, &mut inner);
        } else {
            instance.broadcast(&payload, &mut inner);
        }
        let epoch = self.epoch;
        out.extend_mapped(inner, |msg| Message::Prbc { epoch, slot, msg });
    }

    pub fn abandon(&mut self) {
        self.abandoned = true;
        self.buffered.clear();
    }

    pub fn is_abandoned(&self) -> bool {
        self.abandoned
    }

    pub fn handle(&mut self, from: PartyId, msg: &Message, out: &mut Outbox<Message>) -> Vec<Block> {
        let Message::Prbc { epoch, slot, msg } = msg else {
            return Vec::new();
        };
        if self.abandoned || *epoch != self.epoch || *slot < self.current || *slot > self.max_slot {
            return Vec::new();
        }
        if *slot > self.current {
            self.buffered.entry(*slot).or_default().push((from, msg.clone()));
            return Vec::new();
        }
        let mut blocks = Vec::new();
        self.process(from, msg, out, &mut blocks);
        blocks
    }

    fn process(&mut self, from: PartyId, msg: &PrbcMsg, out: &mut Outbox<Message>, blocks: &mut Vec<Block>) {
        let slot = self.current;
        let epoch = self.epoch;
        let mut inner = Outbox::new();
        let outputs = self.instance.as_mut().expect("current instance").handle(from, msg, &mut inner);
        out.extend_mapped(inner, |msg| Message::Prbc { epoch, slot, msg });
        for o in outputs {
            match o {
                PrbcOutput::Delivered(p) => self.payload = Some(p),
                PrbcOutput::Finalized(sig) => self.proof = Some(sig),
                PrbcOutput::Evidence(e) => self.evidence.push(e),
            }
        }
        if self.payload.is_some() && self.proof.is_some() {
            let payload = self.payload.take().expect("checked");
            let sig = self.proof.take().expect("checked");
            // A Byzantine leader may broadcast bytes that are not a batch;
            // every honest party then reads the same empty batch.
            let mut r = Reader::new(&payload);
            let txs = decode_txs(&mut r).ok().filter(|_| r.remaining() == 0).unwrap_or_default();
            let digest = txs_digest(&txs);
            blocks.push(Block { epoch, slot, txs, proof: Some(QuorumProof { digest, sig }) });
            self.delivered = slot;
            self.current = slot + 1;
            self.instance = Some(self.new_instance(slot + 1));
            if let Some(pending) = self.buffered.remove(&(slot + 1)) {
                for (from, m) in pending {
                    if self.current != slot + 1 {
                        break;
                    }
                    self.process(from, &m, out, blocks);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bolt::{bolt_verify, FastlaneKind};
    use crate::crypto::deal;
    use crate::sim::Target;
    use std::collections::VecDeque;

    fn drive(lanes: &mut [RbcLane], slots: Slot) -> Vec<Vec<Block>> {
        let n = lanes.len();
        let mut delivered = vec![Vec::new(); n];
        let mut queue: VecDeque<(PartyId, PartyId, Message)> = VecDeque::new();
        let enqueue = |queue: &mut VecDeque<_>, from: PartyId, out: Outbox<Message>| {
            for (t, m) in out.into_items() {
                match t {
                    Target::To(j) => queue.push_back((from, j, m)),
                    _ => (0..n).for_each(|j| queue.push_back((from, j, m.clone()))),
                }
            }
        };
        let mut batch = 0u64;
        loop {
            if let Some(s) = lanes[0].next_proposal(slots) {
                assert_eq!(s, batch + 1);
                batch += 1;
                let mut out = Outbox::new();
                lanes[0].propose(vec![Tx::new(batch, 16)], &mut out);
                enqueue(&mut queue, 0, out);
            }
            let Some((from, to, m)) = queue.pop_front() else { break };
            let mut out = Outbox::new();
            delivered[to].extend(lanes[to].handle(from, &m, &mut out));
            enqueue(&mut queue, to, out);
        }
        delivered
    }

    #[test]
    fn three_sequential_slots_in_order() {
        let keys: Vec<_> = deal(4, 1, 9).unwrap().into_iter().map(Arc::new).collect();
        let mut lanes: Vec<_> = keys.iter().map(|k| RbcLane::new(2, 0, k.clone(), 10)).collect();
        let out = drive(&mut lanes, 3);
        for blocks in out {
            let slots: Vec<_> = blocks.iter().map(|b| b.slot).collect();
            assert_eq!(slots, vec![1, 2, 3]);
            for b in &blocks {
                assert_eq!(b.txs, vec![Tx::new(b.slot, 16)]);
                assert!(bolt_verify(FastlaneKind::Rbc, keys[0].public(), 1, 2, b.slot, b.proof.as_ref().unwrap()));
            }
        }
    }

    #[test]
    fn abandon_between_slots_stops_the_lane() {
        let keys: Vec<_> = deal(4, 1, 9).unwrap().into_iter().map(Arc::new).collect();
        let mut lanes: Vec<_> = keys.iter().map(|k| RbcLane::new(1, 0, k.clone(), 10)).collect();
        let out = drive(&mut lanes, 1);
        assert!(out.iter().all(|b| b.len() == 1));
        lanes.iter_mut().for_each(RbcLane::abandon);
        assert_eq!(lanes[0].next_proposal(3), None);
        let late = Message::Prbc { epoch: 1, slot: 2, msg: PrbcMsg::Ready { root: crate::crypto::hash(b"r") } };
        let mut o = Outbox::new();
        assert!(lanes[1].handle(0, &late, &mut o).is_empty());
        assert!(o.is_empty());
    }
}
