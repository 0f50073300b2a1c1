//! Provable reliable broadcast: erasure-coded Bracha broadcast with Merkle
//! commitments, followed by a round of completion shares.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use crate::crypto::{erasure_decode, erasure_encode, merkle_build, merkle_verify_at, CombinedSig, Digest, PartyKeys, SigShare};
use crate::message::PrbcMsg;
use crate::sim::Outbox;
use crate::PartyId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PrbcOutput {
    Delivered(Vec<u8>),
    /// 2f+1 completion shares combined.
    Finalized(CombinedSig),
    /// The sender's fragments do not re-encode to the committed root.
    Evidence(String),
}

#[derive(Debug)]
pub struct Prbc {
    n: usize,
    f: usize,
    me: PartyId,
    sender: PartyId,
    keys: Arc<PartyKeys>,
    /// Message the completion shares sign; `None` disables the DONE round.
    done_msg: Option<Vec<u8>>,
    val_seen: bool,
    echoes: HashMap<Digest, BTreeMap<PartyId, Vec<u8>>>,
    echo_senders: HashSet<PartyId>,
    readies: HashMap<Digest, HashSet<PartyId>>,
    ready_senders: HashSet<PartyId>,
    ready_sent: bool,
    delivered: Option<(Digest, Vec<u8>)>,
    poisoned: bool,
    done_shares: Vec<SigShare>,
    done_signers: HashSet<PartyId>,
    proof: Option<CombinedSig>,
}

impl Prbc {
    pub fn new(sender: PartyId, keys: Arc<PartyKeys>, done_msg: Option<Vec<u8>>) -> Self {
        Prbc {
            n: keys.public().n(),
            f: keys.f,
            me: keys.party,
            sender,
            keys,
            done_msg,
            val_seen: false,
            echoes: HashMap::new(),
            echo_senders: HashSet::new(),
            readies: HashMap::new(),
            ready_senders: HashSet::new(),
            ready_sent: false,
            delivered: None,
            poisoned: false,
            done_shares: Vec::new(),
            done_signers: HashSet::new(),
            proof: None,
        }
    }

    pub fn sender(&self) -> PartyId {
        self.sender
    }

    pub fn delivered(&self) -> Option<&[u8]> {
        self.delivered.as_ref().map(|(_, v)| v.as_slice())
    }

    pub fn proof(&self) -> Option<&CombinedSig> {
        self.proof.as_ref()
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    fn k(&self) -> usize {
        self.n - 2 * self.f
    }

    /// Sends one VAL per party (the sender's own copy is local).
    pub fn broadcast(&self, payload: &[u8], out: &mut Outbox<PrbcMsg>) {
        self.broadcast_split(payload, payload, self.n, out);
    }

    /// Parties `0..split` receive fragments of `a`, the rest of `b`.
    /// Only scripted Byzantine senders call this with `a != b`.
    pub fn broadcast_split(&self, a: &[u8], b: &[u8], split: usize, out: &mut Outbox<PrbcMsg>) {
        let encode = |payload: &[u8]| {
            let frags = erasure_encode(self.k(), self.n, payload).expect("valid (n-2f, n) parameters");
            let (root, proofs) = merkle_build(&frags).expect("n >= 1 fragments");
            (frags, root, proofs)
        };
        let first = encode(a);
        let second = if a == b { None } else { Some(encode(b)) };
        for j in 0..self.n {
            let (frags, root, proofs) = match &second {
                Some(s) if j >= split => s,
                _ => &first,
            };
            out.send(j, PrbcMsg::Val { root: *root, fragment: frags[j].clone(), proof: proofs[j].clone() });
        }
    }

    pub fn handle(&mut self, from: PartyId, msg: &PrbcMsg, out: &mut Outbox<PrbcMsg>) -> Vec<PrbcOutput> {
        let mut outputs = Vec::new();
        match msg {
            PrbcMsg::Val { root, fragment, proof } => {
                if from != self.sender || self.val_seen || !merkle_verify_at(root, fragment, proof, self.me, self.n) {
                    return outputs;
                }
                self.val_seen = true;
                out.multicast(PrbcMsg::Echo { root: *root, fragment: fragment.clone(), proof: proof.clone() });
            }
            PrbcMsg::Echo { root, fragment, proof } => {
                if self.echo_senders.contains(&from) || !merkle_verify_at(root, fragment, proof, from, self.n) {
                    return outputs;
                }
                self.echo_senders.insert(from);
                let count = {
                    let group = self.echoes.entry(*root).or_default();
                    group.insert(from, fragment.clone());
                    group.len()
                };
                if !self.ready_sent && count > 2 * self.f {
                    self.ready_sent = true;
                    out.multicast(PrbcMsg::Ready { root: *root });
                }
                self.try_deliver(*root, out, &mut outputs);
            }
            PrbcMsg::Ready { root } => {
                if !self.ready_senders.insert(from) {
                    return outputs;
                }
                let count = {
                    let group = self.readies.entry(*root).or_default();
                    group.insert(from);
                    group.len()
                };
                if !self.ready_sent && count > self.f {
                    self.ready_sent = true;
                    out.multicast(PrbcMsg::Ready { root: *root });
                }
                self.try_deliver(*root, out, &mut outputs);
            }
            PrbcMsg::Done { share } => {
                let Some(done_msg) = &self.done_msg else {
                    return outputs;
                };
                if share.signer != from || self.proof.is_some() || self.done_signers.contains(&from) {
                    return outputs;
                }
                if !self.keys.public().verify_share(done_msg, share) {
                    return outputs;
                }
                self.done_signers.insert(from);
                self.done_shares.push(share.clone());
                let t = 2 * self.f + 1;
                if self.done_shares.len() >= t {
                    if let Ok(sig) = self.keys.public().combine(t, done_msg, &self.done_shares) {
                        self.proof = Some(sig.clone());
                        outputs.push(PrbcOutput::Finalized(sig));
                    }
                }
            }
        }
        outputs
    }

    fn try_deliver(&mut self, root: Digest, out: &mut Outbox<PrbcMsg>, outputs: &mut Vec<PrbcOutput>) {
        if self.delivered.is_some() || self.poisoned {
            return;
        }
        let readies = self.readies.get(&root).map_or(0, HashSet::len);
        let Some(group) = self.echoes.get(&root) else {
            return;
        };
        if readies < 2 * self.f + 1 || group.len() < self.k() {
            return;
        }
        let fragments: Vec<(usize, Vec<u8>)> = group.iter().take(self.k()).map(|(&j, m)| (j, m.clone())).collect();
        let checked = erasure_decode(self.k(), self.n, &fragments).ok().filter(|payload| {
            erasure_encode(self.k(), self.n, payload)
                .ok()
                .and_then(|frags| merkle_build(&frags).ok())
                .is_some_and(|(r, _)| r == root)
        });
        let Some(payload) = checked else {
            self.poisoned = true;
            log::warn!("party {} poisoned broadcast from {}: root {} does not re-encode", self.me, self.sender, root);
            outputs.push(PrbcOutput::Evidence(format!("sender {} committed to root {} that does not re-encode", self.sender, root)));
            return;
        };
        self.delivered = Some((root, payload.clone()));
        if let Some(done_msg) = &self.done_msg {
            out.multicast(PrbcMsg::Done { share: self.keys.signer.sign_share(done_msg) });
        }
        outputs.push(PrbcOutput::Delivered(payload));
    }
}

/// Verifies a completion proof for the instance whose DONE message is `done_msg`.
pub fn prbc_verify(keys: &PartyKeys, done_msg: &[u8], proof: &CombinedSig) -> bool {
    keys.public().verify(2 * keys.f + 1, done_msg, proof)
}
