//! Omniscient safety monitors. They read node state between events and
//! every envelope at send time, and record violations instead of panicking
//! so that a run can report all of them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bolt::{hs_vote_message, FastlaneKind};
use crate::crypto::{Digest, PublicKeys, SigShare};
use crate::message::{Message, PrbcMsg};
use crate::node::BdtNode;
use crate::sim::{Observer, Sent};
use crate::types::txs_digest;
use crate::{Epoch, PartyId, Slot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Two honest logs where neither is a prefix of the other.
    PrefixConsistency,
    /// A log shrank or an entry changed.
    Revocation,
    /// A slot-j proof became formable while fewer than f+1 honest parties
    /// had delivered slot j-1.
    Notarizability,
    /// An honest maxpace outside `{R-1, R}`.
    PaceRange,
    /// A fastlane block above the notarized maximum was delivered after
    /// 2f+1 PaceSync messages were out.
    AbandonQuiescence,
    /// Agreed pace `h` without f+1 honest parties holding slot `h-1`.
    PaceSafety,
    /// A decryption share left an honest party before its ACS output.
    EarlyDecryption,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub time: u64,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} {:?}: {}", self.time, self.kind, self.detail)
    }
}

const MAX_KEPT: usize = 64;

/// Digest used for RBC completion shares, which sign the slot id only.
const NO_DIGEST: Digest = Digest([0; 32]);

pub struct Monitor {
    n: usize,
    f: usize,
    kind: FastlaneKind,
    public: Arc<PublicKeys>,
    honest: Vec<bool>,
    faulty: usize,

    canonical: Vec<Digest>,
    checked: Vec<usize>,
    last_digest: Vec<Option<Digest>>,

    candidates: HashMap<(Epoch, Slot), Vec<Digest>>,
    unresolved: HashMap<(Epoch, Slot), Vec<(PartyId, SigShare)>>,
    signers: HashMap<(Epoch, Slot, Digest), BTreeSet<PartyId>>,
    mintable: BTreeMap<Epoch, Slot>,
    pacesync_senders: HashMap<Epoch, BTreeSet<PartyId>>,
    sealed: BTreeMap<Epoch, Slot>,
    paces_checked: Vec<usize>,
    agreed_checked: Vec<usize>,

    counts: BTreeMap<ViolationKind, u64>,
    violations: Vec<Violation>,
}

impl Monitor {
    /// `honest[i]` is false for parties running a faulty behavior; crashed
    /// parties count as honest.
    pub fn new(kind: FastlaneKind, f: usize, public: Arc<PublicKeys>, honest: Vec<bool>) -> Self {
        let n = honest.len();
        Monitor {
            n,
            f,
            kind,
            public,
            faulty: honest.iter().filter(|h| !**h).count(),
            honest,
            canonical: Vec::new(),
            checked: vec![0; n],
            last_digest: vec![None; n],
            candidates: HashMap::new(),
            unresolved: HashMap::new(),
            signers: HashMap::new(),
            mintable: BTreeMap::new(),
            pacesync_senders: HashMap::new(),
            sealed: BTreeMap::new(),
            paces_checked: vec![0; n],
            agreed_checked: vec![0; n],
            counts: BTreeMap::new(),
            violations: Vec::new(),
        }
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn count(&self, kind: ViolationKind) -> u64 {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn counts(&self) -> &BTreeMap<ViolationKind, u64> {
        &self.counts
    }

    /// Highest slot of `epoch` for which a proof could have been formed.
    pub fn notarized(&self, epoch: Epoch) -> Slot {
        self.mintable.get(&epoch).copied().unwrap_or(0)
    }

    fn report(&mut self, time: u64, kind: ViolationKind, detail: String) {
        log::warn!("monitor: t={time} {kind:?}: {detail}");
        *self.counts.entry(kind).or_default() += 1;
        if self.violations.len() < MAX_KEPT {
            self.violations.push(Violation { time, kind, detail });
        }
    }

    fn honest_delivered(&self, procs: &[BdtNode], epoch: Epoch, slot: Slot) -> usize {
        procs.iter().filter(|p| self.honest[p.id()] && p.fastlane_delivered(epoch) >= slot).count()
    }

    fn add_signer(&mut self, time: u64, procs: &[BdtNode], epoch: Epoch, slot: Slot, digest: Digest, party: PartyId) {
        let set = self.signers.entry((epoch, slot, digest)).or_default();
        if !set.insert(party) || set.len() + self.faulty < 2 * self.f + 1 {
            return;
        }
        if self.notarized(epoch) >= slot {
            return;
        }
        self.mintable.insert(epoch, slot);
        if slot >= 2 {
            let have = self.honest_delivered(procs, epoch, slot - 1);
            if have < self.f + 1 {
                self.report(
                    time,
                    ViolationKind::Notarizability,
                    format!("e{epoch} slot {slot} formable with {have} honest holders of slot {}", slot - 1),
                );
            }
        }
    }

    fn resolve_votes(&mut self, time: u64, procs: &[BdtNode], epoch: Epoch, slot: Slot) {
        let Some(votes) = self.unresolved.remove(&(epoch, slot)) else { return };
        let candidates = self.candidates.get(&(epoch, slot)).cloned().unwrap_or_default();
        let mut left = Vec::new();
        for (party, share) in votes {
            let hit = candidates.iter().find(|d| self.public.verify_share(&hs_vote_message(epoch, slot, d), &share));
            match hit {
                Some(d) => self.add_signer(time, procs, epoch, slot, *d, party),
                None => left.push((party, share)),
            }
        }
        if !left.is_empty() {
            self.unresolved.insert((epoch, slot), left);
        }
    }

    fn check_logs(&mut self, time: u64, party: PartyId, procs: &[BdtNode]) {
        if !self.honest[party] {
            return;
        }
        let log = procs[party].log();
        let checked = self.checked[party];
        if log.len() < checked {
            self.report(time, ViolationKind::Revocation, format!("party {party} log shrank from {checked} to {}", log.len()));
            self.checked[party] = log.len();
            return;
        }
        if checked > 0 && Some(log[checked - 1].content_digest()) != self.last_digest[party] {
            self.report(time, ViolationKind::Revocation, format!("party {party} rewrote entry {}", checked - 1));
        }
        for (i, block) in log.iter().enumerate().skip(checked) {
            let d = block.content_digest();
            if i < self.canonical.len() {
                if self.canonical[i] != d {
                    self.report(
                        time,
                        ViolationKind::PrefixConsistency,
                        format!("party {party} entry {i} (e{} s{}) differs from the first committed one", block.epoch, block.slot),
                    );
                }
            } else {
                self.canonical.push(d);
            }
            self.last_digest[party] = Some(d);
        }
        self.checked[party] = log.len();
    }

    fn check_node(&mut self, time: u64, party: PartyId, procs: &[BdtNode]) {
        self.check_logs(time, party, procs);
        if !self.honest[party] {
            return;
        }
        let node = &procs[party];
        let over: Vec<(Epoch, Slot, Slot)> = self
            .sealed
            .iter()
            .filter_map(|(&e, &cap)| Some((e, cap, node.fastlane_delivered(e))).filter(|(_, cap, got)| got > cap))
            .collect();
        for (epoch, cap, got) in over {
            self.sealed.insert(epoch, got);
            let detail = format!("party {party} delivered e{epoch} slot {got} above sealed maximum {cap}");
            self.report(time, ViolationKind::AbandonQuiescence, detail);
        }
        let paces = node.paces();
        while self.agreed_checked[party] < paces.len() {
            let rec = &paces[self.agreed_checked[party]];
            let Some(h) = rec.agreed else { break };
            if h >= 2 {
                let have = self.honest_delivered(procs, rec.epoch, h - 1);
                if have < self.f + 1 {
                    let detail = format!("party {party} agreed on {h} in e{} with {have} honest holders of slot {}", rec.epoch, h - 1);
                    self.report(time, ViolationKind::PaceSafety, detail);
                }
            }
            self.agreed_checked[party] += 1;
        }
    }

    /// End-of-run checks that need the global notarized maximum.
    pub fn finish(&mut self, time: u64, procs: &[BdtNode]) {
        for party in 0..self.n {
            self.check_node(time, party, procs);
            if !self.honest[party] {
                continue;
            }
            let paces = procs[party].paces();
            for rec in &paces[self.paces_checked[party]..] {
                let r = self.notarized(rec.epoch);
                if rec.maxpace > r || rec.maxpace + 1 < r {
                    let detail = format!("party {party} e{} maxpace {} with notarized maximum {r}", rec.epoch, rec.maxpace);
                    self.report(time, ViolationKind::PaceRange, detail);
                }
            }
            self.paces_checked[party] = paces.len();
        }
    }
}

impl Observer<BdtNode> for Monitor {
    fn on_send(&mut self, sent: &Sent<'_, Message>, procs: &[BdtNode]) {
        let from = sent.from;
        match sent.msg {
            Message::Proposal { epoch, slot, txs, .. } if self.kind == FastlaneKind::Hs => {
                let d = txs_digest(txs);
                let list = self.candidates.entry((*epoch, *slot)).or_default();
                if !list.contains(&d) {
                    list.push(d);
                    self.resolve_votes(sent.time, procs, *epoch, *slot);
                }
            }
            Message::Vote { epoch, slot, share } if self.honest[from] && self.kind == FastlaneKind::Hs => {
                self.unresolved.entry((*epoch, *slot)).or_default().push((from, share.clone()));
                self.resolve_votes(sent.time, procs, *epoch, *slot);
            }
            Message::Prbc { epoch, slot, msg: PrbcMsg::Done { .. } } if self.honest[from] => {
                self.add_signer(sent.time, procs, *epoch, *slot, NO_DIGEST, from);
            }
            Message::PaceSync { epoch, .. } => {
                let senders = self.pacesync_senders.entry(*epoch).or_default();
                if senders.insert(from) && senders.len() == 2 * self.f + 1 {
                    let cap = self.notarized(*epoch);
                    self.sealed.insert(*epoch, cap);
                }
            }
            Message::Dec { epoch, index, .. } if self.honest[from] && !procs[from].acs_output_ready(*epoch, *index) => {
                let detail = format!("party {from} sent a decryption share for e{epoch} acs {index} before output");
                self.report(sent.time, ViolationKind::EarlyDecryption, detail);
            }
            _ => {}
        }
    }

    fn after_step(&mut self, time: u64, party: Option<PartyId>, procs: &[BdtNode], _rounds: &[u64]) {
        match party {
            Some(p) => self.check_node(time, p, procs),
            None => (0..self.n).for_each(|p| self.check_node(time, p, procs)),
        }
    }
}
