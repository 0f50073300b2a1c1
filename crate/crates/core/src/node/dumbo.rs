//! Pessimistic path: threshold-encrypted batches agreed through ACS.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;

use super::{BdtNode, Path, Phase};
use crate::acs::Acs;
use crate::crypto::{Ciphertext, DecShare};
use crate::message::{AcsSub, Message};
use crate::sim::Outbox;
use crate::types::{decode_txs, encode_txs, Block, Tx};
use crate::wire::{Reader, WireError, Writer};
use crate::{Epoch, PartyId};

/// `u (32) || len-prefixed body || tag (32) || len-prefixed label`.
pub fn encode_ciphertext(ct: &Ciphertext) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(&ct.u).bytes(&ct.body).raw(&ct.tag).bytes(&ct.label);
    w.finish()
}

pub fn decode_ciphertext(bytes: &[u8]) -> Result<Ciphertext, WireError> {
    let mut r = Reader::new(bytes);
    let u = r.array::<32>()?;
    let body = r.bytes()?;
    let tag = r.array::<32>()?;
    let label = r.bytes()?;
    r.finish()?;
    Ok(Ciphertext { u, body, tag, label })
}

fn dumbo_label(epoch: Epoch, index: u64, proposer: PartyId) -> Vec<u8> {
    let mut label = b"bdt/dumbo".to_vec();
    label.extend_from_slice(&epoch.to_be_bytes());
    label.extend_from_slice(&index.to_be_bytes());
    label.extend_from_slice(&(proposer as u64).to_be_bytes());
    label
}

enum Element {
    /// Waiting for shares; holds the verified ones so far.
    Pending(Ciphertext, Vec<DecShare>),
    Done(Vec<Tx>),
    Skipped,
}

#[derive(Default)]
pub(super) struct DumboState {
    started: bool,
    index: u64,
    input_sent: bool,
    elements: Option<BTreeMap<PartyId, Element>>,
    /// Shares that arrived before their ciphertext was known.
    early: HashMap<(u64, PartyId), Vec<DecShare>>,
}

impl BdtNode {
    pub(super) fn start_dumbo(&mut self, out: &mut Outbox<Message>) {
        self.phase = Phase::Dumbo;
        log::debug!("party {} enters the pessimistic path in e{}", self.me, self.epoch);
        self.dumbo.get_or_insert_with(DumboState::default).started = true;
        self.advance_dumbo(out);
    }

    fn pick_batch(&mut self) -> Vec<Tx> {
        let window: Vec<Tx> = self
            .buf
            .iter()
            .filter(|t| Some(t.id) != self.behavior.censor)
            .take(self.cfg.batch)
            .copied()
            .collect();
        let want = (self.cfg.batch / self.cfg.n).max(1).min(window.len());
        let mut picked: Vec<usize> = sample(&mut self.rng, window.len(), want).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| window[i]).collect()
    }

    pub(super) fn on_acs(&mut self, from: PartyId, epoch: Epoch, index: u64, proposer: PartyId, msg: &AcsSub, out: &mut Outbox<Message>) {
        if epoch == self.epoch && self.phase != Phase::Finished && index < self.cfg.dumbo_blocks_per_fallback {
            let keys = self.keys.clone();
            self.acs.entry((epoch, index)).or_insert_with(|| Acs::new(epoch, index, keys));
        }
        let Some(acs) = self.acs.get_mut(&(epoch, index)) else { return };
        acs.handle(from, proposer, msg, out);
        if epoch == self.epoch && self.phase == Phase::Dumbo {
            self.advance_dumbo(out);
        }
    }

    pub(super) fn on_dec(&mut self, from: PartyId, index: u64, proposer: PartyId, share: &DecShare, out: &mut Outbox<Message>) {
        if self.phase == Phase::Finished || share.party != from || proposer >= self.cfg.n {
            return;
        }
        let d = self.dumbo.get_or_insert_with(DumboState::default);
        if index < d.index {
            return;
        }
        match d.elements.as_mut().filter(|_| index == d.index) {
            Some(elements) => {
                let Some(Element::Pending(ct, valid)) = elements.get_mut(&proposer) else { return };
                if valid.iter().any(|s| s.party == from) || !self.keys.tpke().verify_share(ct, share) {
                    return;
                }
                valid.push(share.clone());
                if valid.len() < self.keys.tpke().threshold() {
                    return;
                }
            }
            None => {
                let list = d.early.entry((index, proposer)).or_default();
                if list.len() < self.cfg.n && !list.iter().any(|s| s.party == from) {
                    list.push(share.clone());
                }
                return;
            }
        }
        if self.phase == Phase::Dumbo {
            self.advance_dumbo(out);
        }
    }

    fn advance_dumbo(&mut self, out: &mut Outbox<Message>) {
        loop {
            let epoch = self.epoch;
            let Some(d) = self.dumbo.as_ref() else { return };
            if !d.started {
                return;
            }
            let k = d.index;
            if !d.input_sent {
                let batch = self.pick_batch();
                let label = dumbo_label(epoch, k, self.me);
                let ct = self.keys.tpke().encrypt(&encode_txs(&batch), &label, &mut self.rng);
                let keys = self.keys.clone();
                let acs = self.acs.entry((epoch, k)).or_insert_with(|| Acs::new(epoch, k, keys));
                acs.input(self.me, &encode_ciphertext(&ct), out);
                self.dumbo.as_mut().expect("present").input_sent = true;
            }
            let Some(output) = self.acs.get(&(epoch, k)).and_then(Acs::output) else { return };
            let d = self.dumbo.as_mut().expect("present");
            if d.elements.is_none() {
                let mut elements = BTreeMap::new();
                for (j, payload) in output {
                    let element = match decode_ciphertext(payload) {
                        Ok(ct) if ct.label == dumbo_label(epoch, k, *j) => match self.keys.decryptor.dec_share(&ct) {
                            Ok(share) => {
                                out.multicast(Message::Dec { epoch, index: k, proposer: *j, share });
                                let early = d.early.remove(&(k, *j)).unwrap_or_default();
                                let valid = early.into_iter().filter(|s| self.keys.tpke().verify_share(&ct, s)).collect();
                                Element::Pending(ct, valid)
                            }
                            Err(_) => Element::Skipped,
                        },
                        _ => Element::Skipped,
                    };
                    if matches!(element, Element::Skipped) {
                        self.evidence.push(format!("e{epoch} acs {k}: malformed ciphertext from party {j}"));
                    }
                    elements.insert(*j, element);
                }
                d.elements = Some(elements);
            }
            let tpke = self.keys.tpke().clone();
            let elements = d.elements.as_mut().expect("set above");
            for (j, element) in elements.iter_mut() {
                let Element::Pending(ct, valid) = element else { continue };
                if valid.len() < tpke.threshold() {
                    continue;
                }
                *element = match tpke.decrypt(ct, valid).ok().and_then(|pt| decode_txs(&mut Reader::new(&pt)).ok()) {
                    Some(txs) => Element::Done(txs),
                    None => {
                        self.evidence.push(format!("e{epoch} acs {k}: undecryptable batch from party {j}"));
                        Element::Skipped
                    }
                };
            }
            if elements.values().any(|e| matches!(e, Element::Pending(..))) {
                return;
            }
            let mut txs = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for element in elements.values() {
                if let Element::Done(batch) = element {
                    for tx in batch {
                        if !self.committed.contains(&tx.id) && seen.insert(tx.id) {
                            txs.push(*tx);
                        }
                    }
                }
            }
            d.index += 1;
            d.input_sent = false;
            d.elements = None;
            d.early.retain(|(i, _), _| *i > k);
            let next = d.index;
            self.commit(Block { epoch, slot: k + 1, txs, proof: None }, Path::Fallback, out);
            if next >= self.cfg.dumbo_blocks_per_fallback {
                self.finish_epoch(out);
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ciphertext_codec_round_trips() {
        let keys = crate::crypto::deal(4, 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ct = keys[0].tpke().encrypt(b"payload", &dumbo_label(2, 0, 1), &mut rng);
        let bytes = encode_ciphertext(&ct);
        assert_eq!(decode_ciphertext(&bytes).unwrap(), ct);
        assert!(decode_ciphertext(&bytes[..bytes.len() - 1]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode_ciphertext(&longer).is_err());
    }
}
