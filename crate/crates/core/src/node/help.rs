//! State transfer for blocks a party missed on the fastlane.

use std::collections::{HashMap, HashSet};

use rand::Rng;

use super::{BdtNode, Path, Phase};
use crate::crypto::{erasure_decode, erasure_encode, merkle_build, merkle_verify_at, Digest, MerkleProof};
use crate::message::Message;
use crate::sim::Outbox;
use crate::types::{decode_blocks, encode_blocks, Block};
use crate::{Epoch, PartyId};

pub(super) struct HelpRequest {
    epoch: Epoch,
    tip: u64,
    gap: u64,
    responders: HashSet<PartyId>,
    groups: HashMap<Digest, Vec<(usize, Vec<u8>)>>,
    rejected: HashSet<Digest>,
}

pub(super) type Encoded = (Digest, Vec<Vec<u8>>, Vec<MerkleProof>);

fn encode_range(n: usize, f: usize, blocks: &[Block]) -> Option<Encoded> {
    let stripped: Vec<Block> = blocks.iter().map(|b| Block { proof: None, ..b.clone() }).collect();
    let fragments = erasure_encode(n - 2 * f, n, &encode_blocks(&stripped)).ok()?;
    let (root, proofs) = merkle_build(&fragments).ok()?;
    Some((root, fragments, proofs))
}

impl BdtNode {
    pub(super) fn call_help(&mut self, tip: u64, gap: u64, out: &mut Outbox<Message>) {
        self.phase = Phase::Help;
        log::debug!("party {} asks for {} blocks after {} in e{}", self.me, gap, tip, self.epoch);
        self.help = Some(HelpRequest {
            epoch: self.epoch,
            tip,
            gap,
            responders: HashSet::new(),
            groups: HashMap::new(),
            rejected: HashSet::new(),
        });
        out.multicast(Message::CallHelp { epoch: self.epoch, tip, gap });
    }

    pub(super) fn on_call_help(&mut self, from: PartyId, epoch: Epoch, tip: u64, gap: u64, out: &mut Outbox<Message>) {
        if from == self.me || gap == 0 || gap > self.cfg.esize || epoch > self.cfg.max_epochs {
            return;
        }
        if self.behavior.garbage_help {
            let mut junk = vec![0u8; 64 * gap as usize];
            self.rng.fill(&mut junk[..]);
            if let Ok(fragments) = erasure_encode(self.cfg.n - 2 * self.cfg.f, self.cfg.n, &junk) {
                if let Ok((root, proofs)) = merkle_build(&fragments) {
                    let (fragment, proof) = (fragments[self.me].clone(), proofs[self.me].clone());
                    out.send(from, Message::Help { epoch, tip, gap, root, fragment, proof });
                }
            }
            return;
        }
        if !self.try_serve(from, epoch, tip, gap, out)
            && !self.help_pending.iter().any(|r| r.0 == from && r.1 == epoch)
            && self.help_pending.len() < self.cfg.n * 4
        {
            self.help_pending.push((from, epoch, tip, gap));
        }
    }

    fn try_serve(&mut self, to: PartyId, epoch: Epoch, tip: u64, gap: u64, out: &mut Outbox<Message>) -> bool {
        let key = (epoch, tip, gap);
        if !self.help_cache.contains_key(&key) {
            let have = self.log_epoch(epoch);
            let end = (tip + gap) as usize;
            if have.len() < end {
                return false;
            }
            let Some(encoded) = encode_range(self.cfg.n, self.cfg.f, &have[tip as usize..end]) else { return true };
            self.help_cache.insert(key, encoded);
        }
        let (root, fragments, proofs) = &self.help_cache[&key];
        out.send(to, Message::Help { epoch, tip, gap, root: *root, fragment: fragments[self.me].clone(), proof: proofs[self.me].clone() });
        true
    }

    pub(super) fn serve_pending_help(&mut self, out: &mut Outbox<Message>) {
        if self.help_pending.is_empty() {
            return;
        }
        let pending = std::mem::take(&mut self.help_pending);
        for (to, epoch, tip, gap) in pending {
            if !self.try_serve(to, epoch, tip, gap, out) {
                self.help_pending.push((to, epoch, tip, gap));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(super) fn on_help(
        &mut self,
        from: PartyId,
        epoch: Epoch,
        tip: u64,
        gap: u64,
        root: &Digest,
        fragment: &[u8],
        proof: &MerkleProof,
        out: &mut Outbox<Message>,
    ) {
        if self.phase != Phase::Help {
            return;
        }
        let (n, f) = (self.cfg.n, self.cfg.f);
        let Some(req) = self.help.as_mut() else { return };
        if req.epoch != epoch || req.tip != tip || req.gap != gap || req.rejected.contains(root) {
            return;
        }
        if !merkle_verify_at(root, fragment, proof, from, n) || !req.responders.insert(from) {
            return;
        }
        let group = req.groups.entry(*root).or_default();
        group.push((from, fragment.to_vec()));
        if group.len() < n - 2 * f {
            return;
        }
        let blocks = erasure_decode(n - 2 * f, n, group)
            .ok()
            .and_then(|bytes| decode_blocks(&bytes).ok())
            .filter(|blocks| {
                blocks.len() as u64 == gap
                    && blocks.iter().enumerate().all(|(i, b)| b.epoch == epoch && b.slot == tip + 1 + i as u64)
                    && encode_range(n, f, blocks).is_some_and(|(r, _, _)| r == *root)
            });
        let Some(blocks) = blocks else {
            self.evidence.push(format!("e{epoch} help: inconsistent fragments under root {}", root.to_hex()));
            req.rejected.insert(*root);
            req.groups.remove(root);
            return;
        };
        self.help = None;
        for b in blocks {
            if b.slot as usize == self.log_len(epoch) + 1 {
                self.commit(b, Path::Help, out);
            }
        }
        self.finish_epoch(out);
    }
}
