//! Per-block and per-transaction measurements in logical time and causal
//! rounds, plus aggregates that can be recomputed from the rows.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::message::{Message, PrbcMsg};
use crate::node::{BdtNode, Path};
use crate::sim::{Observer, Sent};
use crate::{Epoch, PartyId, Slot};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub epoch: Epoch,
    pub slot: Slot,
    pub path: Path,
    pub txs: usize,
    /// Causal round of the first honest party to commit the block.
    pub commit_round: u64,
    pub commit_time: u64,
    /// Rounds from the proposal (fastlane) or the first PaceSync of the
    /// epoch (fallback and help) to the commit.
    pub latency_rounds: u64,
    pub msg_count: u64,
    pub byte_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxRow {
    pub id: u64,
    pub inject_time: u64,
    pub commit_time: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub blocks: u64,
    pub mean_latency_rounds: f64,
    pub mean_msgs_per_block: f64,
    pub mean_bytes_per_block: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub committed_txs: u64,
    pub pending_txs: u64,
    pub mean_latency: f64,
    pub p50_latency: u64,
    pub p99_latency: u64,
    /// Committed transactions per 1000 time units.
    pub throughput: f64,
    pub paths: BTreeMap<String, PathSummary>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traffic {
    pub messages: u64,
    pub bytes: u64,
}

/// Everything written to the machine-readable metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub end_time: u64,
    pub blocks: Vec<BlockRow>,
    pub txs: Vec<TxRow>,
    /// Network traffic split by protocol phase.
    pub phases: BTreeMap<String, Traffic>,
    /// Traffic sent by each party.
    pub sent_by: Vec<Traffic>,
    /// Fastlane traffic sent by each party.
    pub fastlane_by: Vec<Traffic>,
    pub aggregates: Aggregates,
}

fn percentile(sorted: &[u64], p: u64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (p * sorted.len() as u64).div_ceil(100).max(1);
    sorted[(rank - 1) as usize]
}

fn path_name(path: Path) -> &'static str {
    match path {
        Path::Fastlane => "fastlane",
        Path::Fallback => "fallback",
        Path::Help => "help",
    }
}

impl Aggregates {
    pub fn from_rows(blocks: &[BlockRow], txs: &[TxRow], end_time: u64) -> Self {
        let mut latencies: Vec<u64> = txs.iter().filter_map(|t| t.commit_time.map(|c| c - t.inject_time)).collect();
        latencies.sort_unstable();
        let committed = latencies.len() as u64;
        let mean_latency = if committed == 0 { 0.0 } else { latencies.iter().sum::<u64>() as f64 / committed as f64 };
        let mut paths: BTreeMap<String, PathSummary> = BTreeMap::new();
        let mut sums: BTreeMap<&str, (u64, u64, u64, u64)> = BTreeMap::new();
        for b in blocks {
            let s = sums.entry(path_name(b.path)).or_default();
            s.0 += 1;
            s.1 += b.latency_rounds;
            s.2 += b.msg_count;
            s.3 += b.byte_count;
        }
        for (name, (count, lat, msgs, bytes)) in sums {
            let c = count as f64;
            paths.insert(
                name.to_string(),
                PathSummary {
                    blocks: count,
                    mean_latency_rounds: lat as f64 / c,
                    mean_msgs_per_block: msgs as f64 / c,
                    mean_bytes_per_block: bytes as f64 / c,
                },
            );
        }
        Aggregates {
            committed_txs: committed,
            pending_txs: txs.len() as u64 - committed,
            mean_latency,
            p50_latency: percentile(&latencies, 50),
            p99_latency: percentile(&latencies, 99),
            throughput: if end_time == 0 { 0.0 } else { committed as f64 * 1000.0 / end_time as f64 },
            paths,
        }
    }
}

impl MetricsRecord {
    /// Fraction of committed blocks that took `path`.
    pub fn path_share(&self, path: Path) -> f64 {
        if self.blocks.is_empty() {
            return 0.0;
        }
        self.blocks.iter().filter(|b| b.path == path).count() as f64 / self.blocks.len() as f64
    }

    /// Fastlane bytes sent by the busiest party, per fastlane block.
    pub fn busiest_fastlane_bytes_per_block(&self) -> f64 {
        let blocks = self.blocks.iter().filter(|b| b.path == Path::Fastlane).count();
        let busiest = self.fastlane_by.iter().map(|t| t.bytes).max().unwrap_or(0);
        if blocks == 0 {
            return 0.0;
        }
        busiest as f64 / blocks as f64
    }

    /// Median message count of fastlane blocks that are neither the first
    /// nor the last of their epoch.
    pub fn steady_fastlane_msgs(&self) -> Option<u64> {
        let mut last: BTreeMap<Epoch, Slot> = BTreeMap::new();
        for b in self.blocks.iter().filter(|b| b.path == Path::Fastlane) {
            let e = last.entry(b.epoch).or_default();
            *e = (*e).max(b.slot);
        }
        let mut counts: Vec<u64> = self
            .blocks
            .iter()
            .filter(|b| b.path == Path::Fastlane && b.slot > 1 && b.slot < last[&b.epoch])
            .map(|b| b.msg_count)
            .collect();
        counts.sort_unstable();
        counts.get(counts.len() / 2).copied()
    }
}

fn phase_of(msg: &Message) -> &'static str {
    match msg {
        Message::Proposal { .. } | Message::Vote { .. } | Message::Prbc { .. } => "fastlane",
        Message::PaceSync { .. } => "pacesync",
        Message::Tcv { .. } | Message::Blackbox { .. } => "tcv",
        Message::Acs { .. } => "acs",
        Message::Dec { .. } => "dec",
        Message::CallHelp { .. } | Message::Help { .. } => "help",
    }
}

/// Observer that builds a [`MetricsRecord`].
pub struct MetricsCollector {
    honest: Vec<bool>,
    proposal_round: HashMap<(Epoch, Slot), u64>,
    pacesync_round: HashMap<Epoch, u64>,
    slot_traffic: HashMap<(Epoch, Slot), Traffic>,
    epoch_traffic: HashMap<(Epoch, &'static str), Traffic>,
    phases: BTreeMap<String, Traffic>,
    sent_by: Vec<Traffic>,
    fastlane_by: Vec<Traffic>,
    seen: Vec<usize>,
    commits: BTreeMap<(Epoch, Slot), (Path, usize, u64, u64)>,
    tx_commit: HashMap<u64, u64>,
    injected: Vec<(u64, u64)>,
    end_time: u64,
}

impl MetricsCollector {
    pub fn new(honest: Vec<bool>) -> Self {
        let n = honest.len();
        MetricsCollector {
            honest,
            proposal_round: HashMap::new(),
            pacesync_round: HashMap::new(),
            slot_traffic: HashMap::new(),
            epoch_traffic: HashMap::new(),
            phases: BTreeMap::new(),
            sent_by: vec![Traffic::default(); n],
            fastlane_by: vec![Traffic::default(); n],
            seen: vec![0; n],
            commits: BTreeMap::new(),
            tx_commit: HashMap::new(),
            injected: Vec::new(),
            end_time: 0,
        }
    }

    /// Registers a scheduled injection of tx `id` at `time`.
    pub fn expect_tx(&mut self, id: u64, time: u64) {
        self.injected.push((id, time));
    }

    fn scan(&mut self, time: u64, party: PartyId, procs: &[BdtNode], rounds: &[u64]) {
        if !self.honest[party] {
            return;
        }
        let node = &procs[party];
        let log = node.log();
        for (block, path) in log.iter().zip(node.paths()).skip(self.seen[party]) {
            if block.slot == u64::MAX {
                continue;
            }
            self.commits.entry((block.epoch, block.slot)).or_insert((*path, block.txs.len(), rounds[party], time));
            for tx in &block.txs {
                self.tx_commit.entry(tx.id).or_insert(time);
            }
        }
        self.seen[party] = log.len();
    }

    pub fn finish(mut self, seed: u64, end_time: u64) -> MetricsRecord {
        self.end_time = end_time;
        let mut per_epoch_fallback: BTreeMap<Epoch, u64> = BTreeMap::new();
        for ((e, _), (path, ..)) in &self.commits {
            if *path == Path::Fallback {
                *per_epoch_fallback.entry(*e).or_default() += 1;
            }
        }
        let epoch_sum = |t: &HashMap<(Epoch, &'static str), Traffic>, e: Epoch, phases: &[&'static str]| {
            phases.iter().fold(Traffic::default(), |acc, p| {
                let x = t.get(&(e, *p)).copied().unwrap_or_default();
                Traffic { messages: acc.messages + x.messages, bytes: acc.bytes + x.bytes }
            })
        };
        let blocks: Vec<BlockRow> = self
            .commits
            .iter()
            .map(|(&(epoch, slot), &(path, txs, commit_round, commit_time))| {
                let (start, traffic) = match path {
                    Path::Fastlane => (
                        self.proposal_round.get(&(epoch, slot)).copied(),
                        self.slot_traffic.get(&(epoch, slot)).copied().unwrap_or_default(),
                    ),
                    Path::Fallback => {
                        let k = per_epoch_fallback[&epoch].max(1);
                        let t = epoch_sum(&self.epoch_traffic, epoch, &["pacesync", "tcv", "acs", "dec"]);
                        (self.pacesync_round.get(&epoch).copied(), Traffic { messages: t.messages / k, bytes: t.bytes / k })
                    }
                    Path::Help => (
                        self.pacesync_round.get(&epoch).copied(),
                        self.slot_traffic.get(&(epoch, slot)).copied().unwrap_or_default(),
                    ),
                };
                BlockRow {
                    epoch,
                    slot,
                    path,
                    txs,
                    commit_round,
                    commit_time,
                    latency_rounds: commit_round.saturating_sub(start.unwrap_or(commit_round)),
                    msg_count: traffic.messages,
                    byte_count: traffic.bytes,
                }
            })
            .collect();
        let mut txs: Vec<TxRow> = self
            .injected
            .iter()
            .map(|&(id, inject_time)| TxRow { id, inject_time, commit_time: self.tx_commit.get(&id).copied() })
            .collect();
        txs.sort_by_key(|t| t.id);
        let aggregates = Aggregates::from_rows(&blocks, &txs, end_time);
        MetricsRecord { seed, end_time, blocks, txs, phases: self.phases, sent_by: self.sent_by, fastlane_by: self.fastlane_by, aggregates }
    }
}

impl Observer<BdtNode> for MetricsCollector {
    fn on_send(&mut self, sent: &Sent<'_, Message>, _procs: &[BdtNode]) {
        let msg = sent.msg;
        match msg {
            Message::Proposal { epoch, slot, .. } | Message::Prbc { epoch, slot, msg: PrbcMsg::Val { .. } } => {
                self.proposal_round.entry((*epoch, *slot)).or_insert(sent.round);
            }
            Message::PaceSync { epoch, .. } if self.honest[sent.from] => {
                self.pacesync_round.entry(*epoch).or_insert(sent.round);
            }
            _ => {}
        }
        if sent.local {
            return;
        }
        let bytes = msg.wire_len() as u64;
        let add = |t: &mut Traffic| {
            t.messages += 1;
            t.bytes += bytes;
        };
        let phase = phase_of(msg);
        add(self.phases.entry(phase.to_string()).or_default());
        add(&mut self.sent_by[sent.from]);
        match msg {
            Message::Proposal { epoch, slot, .. } | Message::Vote { epoch, slot, .. } | Message::Prbc { epoch, slot, .. } => {
                add(self.slot_traffic.entry((*epoch, *slot)).or_default());
                add(&mut self.fastlane_by[sent.from]);
            }
            _ => add(self.epoch_traffic.entry((msg.epoch(), phase)).or_default()),
        }
    }

    fn after_step(&mut self, time: u64, party: Option<PartyId>, procs: &[BdtNode], rounds: &[u64]) {
        match party {
            Some(p) => self.scan(time, p, procs, rounds),
            None => (0..procs.len()).for_each(|p| self.scan(time, p, procs, rounds)),
        }
    }
}
