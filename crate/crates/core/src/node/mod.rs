//! One party's epoch state machine: fastlane supervision with notarized
//! registers, pace synchronization, and the pessimistic fallback.

mod dumbo;
mod help;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acs::Acs;
use crate::bolt::{pacesync_valid, FastlaneKind, HsInstance, RbcLane};
use crate::crypto::PartyKeys;
use crate::message::{BaMsg, BlackboxMsg, Message};
use crate::sim::{Outbox, Process};
use crate::tcv::{Tcv, TcvBlackbox};
use crate::types::{Block, QuorumProof, Tx};
use crate::{Epoch, PartyId, Slot};

pub use dumbo::{decode_ciphertext, encode_ciphertext};
use dumbo::DumboState;
use help::HelpRequest;

/// How the Transformer computes the range it asks peers for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapMode {
    /// `gap = pace - |log_e|` after local appends, from tip `|log_e|`.
    #[default]
    Consistent,
    /// The two-branch register rule with `gap = pace - 2 - p_i`.
    Literal,
}

/// Which pace agreement construction to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TcvMode {
    #[default]
    Direct,
    Blackbox,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub n: usize,
    pub f: usize,
    pub fastlane: FastlaneKind,
    /// Fastlane timeout, in the node's own ticks.
    pub tau: u64,
    /// Censorship timeout on the oldest buffered tx, in ticks; 0 disables.
    pub censorship_timeout: u64,
    pub esize: Slot,
    /// Batch size, in transactions.
    pub batch: usize,
    pub empty_tail: bool,
    pub dumbo_blocks_per_fallback: u64,
    pub gap_mode: GapMode,
    /// Whether a fastlane block without fresh transactions still shifts the
    /// notarized registers.
    pub dup_shift: bool,
    pub tcv_mode: TcvMode,
    /// Epochs to run before the node stops starting new ones.
    pub max_epochs: Epoch,
    /// Empty proposals a leader keeps making after its buffer runs dry, so
    /// earlier blocks get the two successors they need.
    pub idle_tail: u64,
    pub seed: u64,
}

impl NodeConfig {
    pub fn new(n: usize, f: usize, fastlane: FastlaneKind) -> Self {
        NodeConfig {
            n,
            f,
            fastlane,
            tau: 20,
            censorship_timeout: 0,
            esize: 8,
            batch: 8,
            empty_tail: false,
            dumbo_blocks_per_fallback: 1,
            gap_mode: GapMode::Consistent,
            dup_shift: true,
            tcv_mode: TcvMode::Direct,
            max_epochs: 3,
            idle_tail: 3,
            seed: 0,
        }
    }

    /// Fastlane leader of epoch `e` (0-based party index).
    pub fn leader(&self, epoch: Epoch) -> PartyId {
        ((epoch.max(1) - 1) % self.n as u64) as PartyId
    }
}

/// Deviations from the protocol for fault scripts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Behavior {
    /// Epochs in which this party, when leader, never proposes.
    pub silent_epochs: BTreeSet<Epoch>,
    /// Answers every help request with fragments of a fabricated tree.
    pub garbage_help: bool,
    /// Equivocates as leader, forges PaceSync claims and garbles pace
    /// agreement values.
    pub byzantine_leader: bool,
    /// Transaction id this party never includes in its batches.
    pub censor: Option<u64>,
    /// Test fixture: appends a block nobody else has, while being counted
    /// as honest, so that safety monitors must fire.
    pub mutant: bool,
}

impl Behavior {
    pub fn is_faulty(&self) -> bool {
        !self.silent_epochs.is_empty() || self.garbage_help || self.byzantine_leader || self.censor.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Bolt,
    Transformer,
    Dumbo,
    Help,
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Path {
    Fastlane,
    Fallback,
    /// Fetched from peers after pace agreement.
    Help,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interrupt {
    Timeout,
    EpochFull,
    Censorship,
    /// 2f+1 PaceSync messages arrived first.
    Quorum,
}

/// One pass through the Transformer, for monitors and metrics.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaceRecord {
    pub epoch: Epoch,
    /// Own claim `p_i`.
    pub claimed: Slot,
    pub maxpace: Slot,
    /// Agreement output, once known.
    pub agreed: Option<Slot>,
    pub interrupt: Option<Interrupt>,
    /// Highest fastlane slot delivered when entering the Transformer.
    pub delivered_at_entry: Slot,
}

enum Lane {
    Hs(HsInstance),
    Rbc(RbcLane),
    Idle,
}

enum Agreement {
    Direct(Tcv),
    Blackbox(TcvBlackbox),
}

impl Agreement {
    fn decision(&self) -> Option<u64> {
        match self {
            Agreement::Direct(t) => t.decision(),
            Agreement::Blackbox(b) => b.decision(),
        }
    }

    fn is_halted(&self) -> bool {
        match self {
            Agreement::Direct(t) => t.is_halted(),
            Agreement::Blackbox(b) => b.is_halted(),
        }
    }
}

pub struct BdtNode {
    me: PartyId,
    cfg: NodeConfig,
    keys: Arc<PartyKeys>,
    behavior: Behavior,
    rng: ChaCha8Rng,
    epoch: Epoch,
    phase: Phase,
    ticks: u64,
    timer_start: u64,

    log: Vec<Block>,
    paths: Vec<Path>,
    epoch_len: BTreeMap<Epoch, usize>,
    committed: HashSet<u64>,
    buf: VecDeque<Tx>,
    buffered: HashSet<u64>,
    head: Option<u64>,
    head_since: u64,

    lane: Lane,
    proposed: HashSet<u64>,
    trailing_empty: u64,
    one: Option<Block>,
    two: Option<Block>,
    frozen: bool,
    fastlane_delivered: BTreeMap<Epoch, Slot>,

    pacesync_sent: bool,
    claimed: Slot,
    interrupt: Option<Interrupt>,
    pacesyncs: BTreeMap<PartyId, Slot>,
    agreements: BTreeMap<Epoch, Agreement>,
    paces: Vec<PaceRecord>,

    acs: BTreeMap<(Epoch, u64), Acs>,
    dumbo: Option<DumboState>,
    help: Option<HelpRequest>,
    help_pending: Vec<(PartyId, Epoch, u64, u64)>,
    help_cache: HashMap<(Epoch, u64, u64), help::Encoded>,

    future: BTreeMap<Epoch, Vec<(PartyId, Message)>>,
    evidence: Vec<String>,
    mutated: bool,
}

impl std::fmt::Debug for BdtNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BdtNode")
            .field("me", &self.me)
            .field("epoch", &self.epoch)
            .field("phase", &self.phase)
            .field("log", &self.log.len())
            .finish_non_exhaustive()
    }
}

impl BdtNode {
    pub fn new(cfg: NodeConfig, keys: Arc<PartyKeys>, behavior: Behavior) -> Self {
        let me = keys.party;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (me as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x6e6f_6465);
        BdtNode {
            me,
            cfg,
            keys,
            behavior,
            rng,
            epoch: 0,
            phase: Phase::Bolt,
            ticks: 0,
            timer_start: 0,
            log: Vec::new(),
            paths: Vec::new(),
            epoch_len: BTreeMap::new(),
            committed: HashSet::new(),
            buf: VecDeque::new(),
            buffered: HashSet::new(),
            head: None,
            head_since: 0,
            lane: Lane::Idle,
            proposed: HashSet::new(),
            trailing_empty: 0,
            one: None,
            two: None,
            frozen: false,
            fastlane_delivered: BTreeMap::new(),
            pacesync_sent: false,
            claimed: 0,
            interrupt: None,
            pacesyncs: BTreeMap::new(),
            agreements: BTreeMap::new(),
            paces: Vec::new(),
            acs: BTreeMap::new(),
            dumbo: None,
            help: None,
            help_pending: Vec::new(),
            help_cache: HashMap::new(),
            future: BTreeMap::new(),
            evidence: Vec::new(),
            mutated: false,
        }
    }

    pub fn id(&self) -> PartyId {
        self.me
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    pub fn public_keys(&self) -> &Arc<crate::crypto::PublicKeys> {
        self.keys.public()
    }

    pub fn behavior(&self) -> &Behavior {
        &self.behavior
    }

    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn log(&self) -> &[Block] {
        &self.log
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn buffer(&self) -> impl Iterator<Item = &Tx> {
        self.buf.iter()
    }

    pub fn is_committed(&self, tx: u64) -> bool {
        self.committed.contains(&tx)
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Highest slot this party's fastlane delivered in `epoch`.
    pub fn fastlane_delivered(&self, epoch: Epoch) -> Slot {
        self.fastlane_delivered.get(&epoch).copied().unwrap_or(0)
    }

    pub fn paces(&self) -> &[PaceRecord] {
        &self.paces
    }

    pub fn evidence(&self) -> &[String] {
        &self.evidence
    }

    pub fn registers(&self) -> (Option<&Block>, Option<&Block>) {
        (self.two.as_ref(), self.one.as_ref())
    }

    /// Whether the ACS instance `(epoch, index)` has produced its output here.
    pub fn acs_output_ready(&self, epoch: Epoch, index: u64) -> bool {
        self.acs.get(&(epoch, index)).is_some_and(|a| a.output().is_some())
    }

    pub fn acs_instance(&self, epoch: Epoch, index: u64) -> Option<&Acs> {
        self.acs.get(&(epoch, index))
    }

    pub fn pace_agreement(&self, epoch: Epoch) -> Option<&Tcv> {
        match self.agreements.get(&epoch)? {
            Agreement::Direct(t) => Some(t),
            Agreement::Blackbox(b) => Some(b.aba()),
        }
    }

    pub fn pace_decision(&self, epoch: Epoch) -> Option<u64> {
        self.agreements.get(&epoch).and_then(Agreement::decision)
    }

    fn log_len(&self, epoch: Epoch) -> usize {
        self.epoch_len.get(&epoch).copied().unwrap_or(0)
    }

    /// Blocks of `epoch` in log order.
    pub fn log_epoch(&self, epoch: Epoch) -> &[Block] {
        let len = self.log_len(epoch);
        let start = self.log.partition_point(|b| b.epoch < epoch);
        &self.log[start..start + len]
    }

    fn leader(&self) -> PartyId {
        self.cfg.leader(self.epoch)
    }

    // ---- buffer and log ----------------------------------------------------

    fn refresh_head(&mut self) {
        let head = self.buf.front().map(|t| t.id);
        if head != self.head {
            self.head = head;
            self.head_since = self.ticks;
        }
    }

    fn remove_from_buf(&mut self, txs: &[Tx]) {
        let gone: HashSet<u64> = txs.iter().map(|t| t.id).collect();
        if gone.iter().any(|id| self.buffered.contains(id)) {
            self.buf.retain(|t| !gone.contains(&t.id));
            self.buffered.retain(|id| !gone.contains(id));
        }
        self.refresh_head();
    }

    fn commit(&mut self, block: Block, path: Path, out: &mut Outbox<Message>) {
        debug_assert!(self.mutated || self.log.last().is_none_or(|b| (b.epoch, b.slot) < (block.epoch, block.slot)));
        self.committed.extend(block.txs.iter().map(|t| t.id));
        self.remove_from_buf(&block.txs);
        *self.epoch_len.entry(block.epoch).or_default() += 1;
        log::debug!("party {} commits e{}/s{} ({} txs, {:?})", self.me, block.epoch, block.slot, block.txs.len(), path);
        self.log.push(block);
        self.paths.push(path);
        if self.behavior.mutant && !self.mutated {
            self.mutated = true;
            let bogus = Block { epoch: self.epoch, slot: u64::MAX, txs: vec![Tx::new(u64::MAX, 8)], proof: None };
            *self.epoch_len.entry(bogus.epoch).or_default() += 1;
            self.log.push(bogus);
            self.paths.push(path);
        }
        self.serve_pending_help(out);
    }

    // ---- epochs ------------------------------------------------------------

    fn start_epoch(&mut self, epoch: Epoch, out: &mut Outbox<Message>) {
        self.epoch = epoch;
        self.phase = Phase::Bolt;
        self.one = None;
        self.two = None;
        self.frozen = false;
        self.pacesync_sent = false;
        self.claimed = 0;
        self.interrupt = None;
        self.pacesyncs.clear();
        self.proposed.clear();
        self.trailing_empty = 0;
        self.dumbo = None;
        self.help = None;
        self.timer_start = self.ticks;
        self.head_since = self.ticks;
        let leader = self.leader();
        let byz = self.behavior.byzantine_leader;
        self.lane = match self.cfg.fastlane {
            FastlaneKind::Hs => Lane::Hs(HsInstance::new(epoch, leader, self.keys.clone()).with_equivocation(byz)),
            FastlaneKind::Rbc => Lane::Rbc(RbcLane::new(epoch, leader, self.keys.clone(), self.cfg.esize).with_equivocation(byz)),
            FastlaneKind::Timeout => Lane::Idle,
        };
        // Old pace agreements are kept only while they may still be needed.
        self.agreements.retain(|e, a| *e + 1 >= epoch || !a.is_halted());
        self.acs.retain(|(e, _), a| *e + 1 >= epoch || !a.is_quiet());
        self.try_propose(out);
        if let Some(msgs) = self.future.remove(&epoch) {
            for (from, msg) in msgs {
                self.dispatch(from, &msg, out);
            }
        }
    }

    fn finish_epoch(&mut self, out: &mut Outbox<Message>) {
        if self.epoch >= self.cfg.max_epochs {
            self.phase = Phase::Finished;
            self.future.clear();
            return;
        }
        self.start_epoch(self.epoch + 1, out);
    }

    // ---- fastlane ----------------------------------------------------------

    fn try_propose(&mut self, out: &mut Outbox<Message>) {
        if self.phase != Phase::Bolt || self.pacesync_sent || self.behavior.silent_epochs.contains(&self.epoch) {
            return;
        }
        let max_slot = match self.cfg.fastlane {
            // One extra proposal carries the certificate of slot Esize.
            FastlaneKind::Hs => self.cfg.esize + 1,
            _ => self.cfg.esize,
        };
        let next = match &self.lane {
            Lane::Hs(hs) => hs.next_proposal(max_slot),
            Lane::Rbc(rbc) => rbc.next_proposal(max_slot),
            Lane::Idle => None,
        };
        let Some(slot) = next else { return };
        let tail = self.cfg.empty_tail && slot + 1 >= self.cfg.esize;
        let batch: Vec<Tx> = if tail {
            Vec::new()
        } else {
            self.buf
                .iter()
                .filter(|t| !self.proposed.contains(&t.id) && Some(t.id) != self.behavior.censor)
                .take(self.cfg.batch)
                .copied()
                .collect()
        };
        if batch.is_empty() && slot > 1 && !tail && self.trailing_empty >= self.cfg.idle_tail {
            return;
        }
        if batch.is_empty() {
            self.trailing_empty += 1;
        } else {
            self.trailing_empty = 0;
        }
        self.proposed.extend(batch.iter().map(|t| t.id));
        match &mut self.lane {
            Lane::Hs(hs) => hs.propose(batch, out),
            Lane::Rbc(rbc) => rbc.propose(batch, out),
            Lane::Idle => {}
        }
    }

    fn on_fastlane_block(&mut self, block: Block, out: &mut Outbox<Message>) {
        if self.phase != Phase::Bolt || self.pacesync_sent {
            return;
        }
        let slot = block.slot;
        self.fastlane_delivered.insert(self.epoch, slot);
        let fresh = block.txs.iter().any(|t| {
            !self.committed.contains(&t.id)
                && !self.two.as_ref().is_some_and(|b| b.txs.contains(t))
                && !self.one.as_ref().is_some_and(|b| b.txs.contains(t))
        });
        if fresh {
            self.timer_start = self.ticks;
        }
        if !fresh && !self.cfg.dup_shift {
            // The registers must stay consecutive, so once a block is
            // skipped the rest of the epoch is left to pace synchronization.
            self.frozen = true;
        }
        if !self.frozen {
            debug_assert!(self.one.as_ref().is_none_or(|b| b.slot + 1 == slot));
            if let Some(done) = self.two.take() {
                self.commit(done, Path::Fastlane, out);
            }
            self.two = self.one.take();
            self.one = Some(block);
        }
        if slot >= self.cfg.esize {
            self.interrupt(Interrupt::EpochFull, out);
        }
    }

    // ---- pace synchronization ---------------------------------------------

    fn interrupt(&mut self, why: Interrupt, out: &mut Outbox<Message>) {
        if self.pacesync_sent || self.phase != Phase::Bolt {
            return;
        }
        self.pacesync_sent = true;
        self.interrupt = Some(why);
        match &mut self.lane {
            Lane::Hs(hs) => hs.abandon(),
            Lane::Rbc(rbc) => rbc.abandon(),
            Lane::Idle => {}
        }
        let (slot, proof) = match &self.one {
            Some(b) => (b.slot, b.proof.clone()),
            None => (0, None),
        };
        self.claimed = slot;
        log::debug!("party {} interrupts e{} ({:?}) with pace {}", self.me, self.epoch, why, slot);
        if self.behavior.byzantine_leader {
            let forged = proof.clone().or_else(|| self.forged_proof());
            out.multicast(Message::PaceSync { epoch: self.epoch, slot: slot + 5, proof: forged });
        } else {
            out.multicast(Message::PaceSync { epoch: self.epoch, slot, proof });
        }
    }

    fn forged_proof(&mut self) -> Option<QuorumProof> {
        let mut digest = [0u8; 32];
        self.rng.fill(&mut digest[..]);
        let share = self.keys.signer.sign_share(&digest);
        Some(QuorumProof { digest: crate::crypto::Digest(digest), sig: crate::crypto::CombinedSig { shares: vec![share] } })
    }

    fn on_pacesync(&mut self, from: PartyId, slot: Slot, proof: Option<&QuorumProof>, out: &mut Outbox<Message>) {
        if self.phase != Phase::Bolt || self.pacesyncs.contains_key(&from) {
            return;
        }
        if !pacesync_valid(self.cfg.fastlane, self.keys.public(), self.cfg.f, self.epoch, slot, proof) {
            return;
        }
        self.pacesyncs.insert(from, slot);
        if self.pacesyncs.len() < 2 * self.cfg.f + 1 {
            return;
        }
        if !self.pacesync_sent {
            self.interrupt(Interrupt::Quorum, out);
        }
        let maxpace = self.pacesyncs.values().copied().max().unwrap_or(0);
        self.phase = Phase::Transformer;
        self.paces.push(PaceRecord {
            epoch: self.epoch,
            claimed: self.claimed,
            maxpace,
            agreed: None,
            interrupt: self.interrupt,
            delivered_at_entry: self.fastlane_delivered(self.epoch),
        });
        let epoch = self.epoch;
        self.ensure_agreement(epoch);
        let garble = self.behavior.byzantine_leader;
        match self.agreements.get_mut(&epoch).expect("just created") {
            Agreement::Direct(t) => {
                let mut inner = Outbox::new();
                t.input(maxpace, &mut inner);
                self.emit_tcv(epoch, inner, garble, out);
            }
            Agreement::Blackbox(b) => {
                let mut inner = Outbox::new();
                b.input(maxpace, &mut inner);
                out.extend_mapped(inner, |msg| Message::Blackbox { epoch, msg });
            }
        }
        self.check_agreement(out);
    }

    fn ensure_agreement(&mut self, epoch: Epoch) {
        let keys = self.keys.clone();
        let mode = self.cfg.tcv_mode;
        self.agreements.entry(epoch).or_insert_with(|| {
            let mut tag = b"bdt/tcv".to_vec();
            tag.extend_from_slice(&epoch.to_be_bytes());
            match mode {
                TcvMode::Direct => Agreement::Direct(Tcv::new(keys, tag)),
                TcvMode::Blackbox => Agreement::Blackbox(TcvBlackbox::new(keys, tag)),
            }
        });
    }

    fn emit_tcv(&mut self, epoch: Epoch, inner: Outbox<BaMsg>, garble: bool, out: &mut Outbox<Message>) {
        if garble {
            let rng = &mut self.rng;
            for (target, msg) in inner.into_items() {
                let msg = match msg {
                    BaMsg::Bval { round, .. } => BaMsg::Bval { round, value: rng.gen_range(0..1000) },
                    BaMsg::Aux { round, .. } => BaMsg::Aux { round, value: rng.gen_range(0..1000) },
                    other => other,
                };
                out.push(target, Message::Tcv { epoch, msg });
            }
        } else {
            out.extend_mapped(inner, |msg| Message::Tcv { epoch, msg });
        }
    }

    fn on_agreement_msg(&mut self, from: PartyId, epoch: Epoch, msg: &Message, out: &mut Outbox<Message>) {
        if epoch == self.epoch && self.phase != Phase::Finished {
            self.ensure_agreement(epoch);
        }
        let garble = self.behavior.byzantine_leader;
        let Some(agreement) = self.agreements.get_mut(&epoch) else { return };
        match (agreement, msg) {
            (Agreement::Direct(t), Message::Tcv { msg, .. }) => {
                let mut inner = Outbox::new();
                t.handle(from, msg, &mut inner);
                if t.decision().is_some() {
                    t.prune();
                }
                self.emit_tcv(epoch, inner, garble, out);
            }
            (Agreement::Blackbox(b), Message::Blackbox { msg, .. }) => {
                let mut inner = Outbox::new();
                b.handle(from, msg, &mut inner);
                out.extend_mapped(inner, |msg: BlackboxMsg| Message::Blackbox { epoch, msg });
            }
            _ => {}
        }
        if epoch == self.epoch {
            self.check_agreement(out);
        }
    }

    fn check_agreement(&mut self, out: &mut Outbox<Message>) {
        if self.phase != Phase::Transformer {
            return;
        }
        let Some(p) = self.pace_decision(self.epoch) else { return };
        if let Some(rec) = self.paces.last_mut() {
            rec.agreed = Some(p);
        }
        let pace = p.saturating_sub(1);
        log::debug!("party {} agrees on pace {} in e{}", self.me, pace, self.epoch);
        if pace == 0 {
            self.start_dumbo(out);
            return;
        }
        let epoch = self.epoch;
        let (tip, gap) = match self.cfg.gap_mode {
            GapMode::Consistent => {
                for b in [self.two.take(), self.one.take()].into_iter().flatten() {
                    if b.slot <= pace && b.slot as usize == self.log_len(epoch) + 1 {
                        self.commit(b, Path::Fastlane, out);
                    }
                }
                let have = self.log_len(epoch) as u64;
                (have, pace.saturating_sub(have))
            }
            GapMode::Literal => {
                let p_i = self.claimed;
                let (two, one) = (self.two.take(), self.one.take());
                if let Some(two) = two {
                    if pace + 1 == p_i {
                        self.commit(two, Path::Fastlane, out);
                    } else if pace >= p_i {
                        self.commit(two, Path::Fastlane, out);
                        if let Some(one) = one {
                            self.commit(one, Path::Fastlane, out);
                        }
                    }
                }
                let gap = pace as i64 - 2 - p_i as i64;
                (self.log_len(epoch) as u64, gap.max(0) as u64)
            }
        };
        if gap > 0 {
            self.call_help(tip, gap, out);
        } else {
            self.finish_epoch(out);
        }
    }

    // ---- message routing ---------------------------------------------------

    fn dispatch(&mut self, from: PartyId, msg: &Message, out: &mut Outbox<Message>) {
        let epoch = msg.epoch();
        match msg {
            Message::CallHelp { epoch, tip, gap } => return self.on_call_help(from, *epoch, *tip, *gap, out),
            Message::Help { epoch, tip, gap, root, fragment, proof } => {
                return self.on_help(from, *epoch, *tip, *gap, root, fragment, proof, out)
            }
            _ => {}
        }
        if epoch > self.epoch {
            if self.phase != Phase::Finished && epoch <= self.cfg.max_epochs {
                self.future.entry(epoch).or_default().push((from, msg.clone()));
            }
            return;
        }
        match msg {
            Message::Proposal { .. } | Message::Vote { .. } | Message::Prbc { .. } => {
                if epoch == self.epoch && self.phase == Phase::Bolt {
                    self.on_fastlane_msg(from, msg, out);
                }
            }
            Message::PaceSync { slot, proof, .. } => {
                if epoch == self.epoch {
                    self.on_pacesync(from, *slot, proof.as_ref(), out);
                }
            }
            Message::Tcv { .. } | Message::Blackbox { .. } => self.on_agreement_msg(from, epoch, msg, out),
            Message::Acs { index, proposer, msg, .. } => self.on_acs(from, epoch, *index, *proposer, msg, out),
            Message::Dec { index, proposer, share, .. } => {
                if epoch == self.epoch {
                    self.on_dec(from, *index, *proposer, share, out);
                }
            }
            Message::CallHelp { .. } | Message::Help { .. } => unreachable!("handled above"),
        }
    }

    fn on_fastlane_msg(&mut self, from: PartyId, msg: &Message, out: &mut Outbox<Message>) {
        let blocks = match &mut self.lane {
            Lane::Hs(hs) => hs.handle(from, msg, out),
            Lane::Rbc(rbc) => {
                let blocks = rbc.handle(from, msg, out);
                if !rbc.evidence().is_empty() {
                    self.evidence.extend(rbc.evidence().iter().cloned());
                }
                blocks
            }
            Lane::Idle => Vec::new(),
        };
        for b in blocks {
            self.on_fastlane_block(b, out);
        }
        self.try_propose(out);
    }
}

impl Process for BdtNode {
    type Msg = Message;

    fn start(&mut self, out: &mut Outbox<Message>) {
        self.start_epoch(1, out);
    }

    fn handle(&mut self, from: PartyId, msg: &Message, out: &mut Outbox<Message>) {
        self.dispatch(from, msg, out);
    }

    fn tick(&mut self, out: &mut Outbox<Message>) {
        self.ticks += 1;
        if self.phase != Phase::Bolt || self.pacesync_sent {
            return;
        }
        if self.ticks - self.timer_start >= self.cfg.tau {
            self.interrupt(Interrupt::Timeout, out);
        } else if self.cfg.censorship_timeout > 0 && self.head.is_some() && self.ticks - self.head_since >= self.cfg.censorship_timeout {
            self.interrupt(Interrupt::Censorship, out);
        }
    }

    fn inject(&mut self, tx: Tx, out: &mut Outbox<Message>) {
        if self.committed.contains(&tx.id) || !self.buffered.insert(tx.id) {
            return;
        }
        self.buf.push_back(tx);
        self.refresh_head();
        self.try_propose(out);
    }

    fn wants_ticks(&self) -> bool {
        self.phase != Phase::Finished
    }
}

/// Builds the honest-by-default party set for one run.
pub fn make_nodes(cfg: &NodeConfig, behaviors: &HashMap<PartyId, Behavior>) -> Result<Vec<BdtNode>, crate::crypto::CryptoError> {
    let keys = crate::crypto::deal(cfg.n, cfg.f, cfg.seed)?;
    Ok(keys
        .into_iter()
        .map(|k| {
            let b = behaviors.get(&k.party).cloned().unwrap_or_default();
            BdtNode::new(cfg.clone(), Arc::new(k), b)
        })
        .collect())
}
