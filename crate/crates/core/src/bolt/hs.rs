//! Stable-leader pipelined multicast.
//!
//! The leader multicasts `proposal(e, s, TXs_s, σ_{s-1})`; every party
//! (leader included, through its local copy) checks σ_{s-1}, delivers block
//! s-1 and sends its vote for slot s back to the leader. The leader combines
//! 2f+1 votes into σ_s, which the next proposal carries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use crate::bolt::{bolt_verify, hs_vote_message, FastlaneKind};
use crate::crypto::{Digest, PartyKeys, SigShare};
use crate::message::Message;
use crate::sim::Outbox;
use crate::types::{txs_digest, Block, QuorumProof, Tx};
use crate::{Epoch, PartyId, Slot};

/// Candidate proposals held per future slot before the slot is reached.
const PENDING_PER_SLOT: usize = 2;

#[derive(Debug)]
pub struct HsInstance {
    epoch: Epoch,
    me: PartyId,
    leader: PartyId,
    keys: Arc<PartyKeys>,
    abandoned: bool,
    equivocate: bool,
    // follower side
    next: Slot,
    last: Option<(Vec<Tx>, Digest)>,
    pending: BTreeMap<Slot, Vec<(Vec<Tx>, Option<QuorumProof>)>>,
    delivered: Slot,
    // leader side
    proposed: Slot,
    digests: BTreeMap<Slot, Vec<Digest>>,
    votes: HashMap<(Slot, Digest), Vec<SigShare>>,
    voters: HashMap<(Slot, Digest), HashSet<PartyId>>,
    certified: Option<(Slot, QuorumProof)>,
}

impl HsInstance {
    pub fn new(epoch: Epoch, leader: PartyId, keys: Arc<PartyKeys>) -> Self {
        HsInstance {
            epoch,
            me: keys.party,
            leader,
            keys,
            abandoned: false,
            equivocate: false,
            next: 1,
            last: None,
            pending: BTreeMap::new(),
            delivered: 0,
            proposed: 0,
            digests: BTreeMap::new(),
            votes: HashMap::new(),
            voters: HashMap::new(),
            certified: None,
        }
    }

    /// Scripted Byzantine leader: every proposal is split into two
    /// conflicting versions sent to disjoint halves of the parties.
    pub fn with_equivocation(mut self, on: bool) -> Self {
        self.equivocate = on;
        self
    }

    pub fn is_leader(&self) -> bool {
        self.me == self.leader
    }

    pub fn leader(&self) -> PartyId {
        self.leader
    }

    pub fn delivered(&self) -> Slot {
        self.delivered
    }

    pub fn proposed(&self) -> Slot {
        self.proposed
    }

    pub fn is_abandoned(&self) -> bool {
        self.abandoned
    }

    /// The slot the leader may propose next, if any, capped at `max_slot`.
    pub fn next_proposal(&self, max_slot: Slot) -> Option<Slot> {
        if !self.is_leader() || self.abandoned || self.proposed >= max_slot {
            return None;
        }
        match (&self.certified, self.proposed) {
            (_, 0) => Some(1),
            (Some((s, _)), p) if *s == p => Some(p + 1),
            _ => None,
        }
    }

    /// Leader only. Proposes the next slot; the caller checked
    /// [`next_proposal`](Self::next_proposal).
    pub fn propose(&mut self, txs: Vec<Tx>, out: &mut Outbox<Message>) {
        let slot = self.proposed + 1;
        let prev = if slot == 1 { None } else { self.certified.take().map(|(_, p)| p) };
        self.proposed = slot;
        let epoch = self.epoch;
        if self.equivocate {
            let mut alt = txs.clone();
            alt.reverse();
            alt.push(Tx::new(u64::MAX - slot, crate::types::MIN_TX_SIZE));
            let n = self.keys.public().n();
            let (da, db) = (txs_digest(&txs), txs_digest(&alt));
            self.digests.insert(slot, vec![da, db]);
            // The equivocator signs both versions.
            let share = self.keys.signer.sign_share(&hs_vote_message(epoch, slot, &db));
            self.record_vote(slot, db, share);
            for j in 0..n {
                let body = if j < n / 2 + 1 { txs.clone() } else { alt.clone() };
                out.send(j, Message::Proposal { epoch, slot, txs: body, prev: prev.clone() });
            }
        } else {
            self.digests.insert(slot, vec![txs_digest(&txs)]);
            out.multicast(Message::Proposal { epoch, slot, txs, prev });
        }
    }

    pub fn abandon(&mut self) {
        self.abandoned = true;
        self.pending.clear();
    }

    /// Processes a proposal or vote; returns delivered blocks in order.
    pub fn handle(&mut self, from: PartyId, msg: &Message, out: &mut Outbox<Message>) -> Vec<Block> {
        if self.abandoned || msg.epoch() != self.epoch {
            return Vec::new();
        }
        match msg {
            Message::Proposal { slot, txs, prev, .. } => self.on_proposal(from, *slot, txs, prev.as_ref(), out),
            Message::Vote { slot, share, .. } => {
                self.on_vote(from, *slot, share);
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    fn on_proposal(&mut self, from: PartyId, slot: Slot, txs: &[Tx], prev: Option<&QuorumProof>, out: &mut Outbox<Message>) -> Vec<Block> {
        if from != self.leader || slot < self.next || slot == 0 {
            return Vec::new();
        }
        let entry = self.pending.entry(slot).or_default();
        if entry.len() < PENDING_PER_SLOT {
            entry.push((txs.to_vec(), prev.cloned()));
        }
        let mut delivered = Vec::new();
        while let Some(candidates) = self.pending.remove(&self.next) {
            let mut accepted = false;
            for (txs, prev) in candidates {
                if let Some(block) = self.try_accept(txs, prev, out) {
                    delivered.extend(block);
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                break;
            }
        }
        delivered
    }

    /// Votes on a proposal for `self.next` if its predecessor proof checks.
    /// Returns `None` if rejected, else the delivered predecessor (if any).
    fn try_accept(&mut self, txs: Vec<Tx>, prev: Option<QuorumProof>, out: &mut Outbox<Message>) -> Option<Option<Block>> {
        let slot = self.next;
        let f = self.keys.f;
        let block = if slot == 1 {
            None
        } else {
            let proof = prev?;
            let (last_txs, last_digest) = self.last.as_ref()?;
            if proof.digest != *last_digest || !bolt_verify(FastlaneKind::Hs, self.keys.public(), f, self.epoch, slot - 1, &proof) {
                return None;
            }
            Some(Block { epoch: self.epoch, slot: slot - 1, txs: last_txs.clone(), proof: Some(proof) })
        };
        let digest = txs_digest(&txs);
        let share = self.keys.signer.sign_share(&hs_vote_message(self.epoch, slot, &digest));
        out.send(self.leader, Message::Vote { epoch: self.epoch, slot, share });
        self.last = Some((txs, digest));
        self.next = slot + 1;
        if block.is_some() {
            self.delivered = slot - 1;
        }
        Some(block)
    }

    fn on_vote(&mut self, from: PartyId, slot: Slot, share: &SigShare) {
        if !self.is_leader() || share.signer != from || slot != self.proposed {
            return;
        }
        let Some(candidates) = self.digests.get(&slot) else {
            return;
        };
        let public = self.keys.public();
        let Some(digest) = candidates
            .iter()
            .copied()
            .find(|d| public.verify_share(&hs_vote_message(self.epoch, slot, d), share))
        else {
            return;
        };
        self.record_vote(slot, digest, share.clone());
    }

    fn record_vote(&mut self, slot: Slot, digest: Digest, share: SigShare) {
        let key = (slot, digest);
        if !self.voters.entry(key).or_default().insert(share.signer) {
            return;
        }
        let shares = self.votes.entry(key).or_default();
        shares.push(share);
        let t = 2 * self.keys.f + 1;
        if shares.len() == t && self.certified.is_none() {
            let msg = hs_vote_message(self.epoch, slot, &digest);
            if let Ok(sig) = self.keys.public().combine(t, &msg, shares) {
                self.certified = Some((slot, QuorumProof { digest, sig }));
            }
        }
    }
}
