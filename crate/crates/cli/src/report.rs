//! Text summaries and the machine-readable run and compare files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use bdt_core::config::ScenarioConfig;
use bdt_core::metrics::MetricsRecord;
use bdt_core::monitor::{Violation, ViolationKind};
use bdt_core::node::Path;
use bdt_core::scenario::RunReport;
use bdt_core::sim::Outcome;

/// One seed's entry in `metrics.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunEntry {
    pub seed: u64,
    /// `completed`, `horizon` or `quiescent`.
    pub outcome: String,
    pub events: u64,
    pub violation_counts: BTreeMap<ViolationKind, u64>,
    pub violations: Vec<Violation>,
    pub metrics: MetricsRecord,
}

impl RunEntry {
    pub fn from_report(r: &RunReport) -> Self {
        RunEntry {
            seed: r.seed,
            outcome: outcome_name(r.outcome).to_string(),
            events: r.stats.events,
            violation_counts: r.violation_counts.iter().copied().collect(),
            violations: r.violations.clone(),
            metrics: r.metrics.clone(),
        }
    }

    pub fn ok(&self) -> bool {
        self.outcome == "completed" && self.violation_counts.values().all(|&c| c == 0)
    }
}

/// Layout of `metrics.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunFile {
    pub config: ScenarioConfig,
    pub runs: Vec<RunEntry>,
}

pub fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Completed => "completed",
        Outcome::Horizon => "horizon",
        Outcome::Quiescent => "quiescent",
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

pub fn summarize_run(cfg: &ScenarioConfig, e: &RunEntry) -> String {
    let m = &e.metrics;
    let a = &m.aggregates;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "seed {}: {} at t={} after {} events ({} n={} f={}{})",
        e.seed,
        e.outcome,
        m.end_time,
        e.events,
        cfg.fastlane,
        cfg.n,
        cfg.f,
        if cfg.faults.is_empty() { String::new() } else { format!(", faults {}", cfg.faults) }
    );
    let _ = writeln!(
        s,
        "  blocks: {} (fastlane {}, fallback {}, help {})",
        m.blocks.len(),
        pct(m.path_share(Path::Fastlane)),
        pct(m.path_share(Path::Fallback)),
        pct(m.path_share(Path::Help))
    );
    let _ = writeln!(
        s,
        "  txs: {} committed, {} pending; latency mean {:.1} p50 {} p99 {}; throughput {:.2} per 1000 time units",
        a.committed_txs, a.pending_txs, a.mean_latency, a.p50_latency, a.p99_latency, a.throughput
    );
    let _ = writeln!(s, "  {:<10} {:>7} {:>8} {:>11} {:>12}", "path", "blocks", "rounds", "msgs/block", "bytes/block");
    for (name, p) in &a.paths {
        let _ = writeln!(
            s,
            "  {:<10} {:>7} {:>8.1} {:>11.1} {:>12.1}",
            name, p.blocks, p.mean_latency_rounds, p.mean_msgs_per_block, p.mean_bytes_per_block
        );
    }
    let phases: Vec<String> = m.phases.iter().map(|(k, t)| format!("{k} {}/{}B", t.messages, t.bytes)).collect();
    let _ = writeln!(s, "  traffic: {}", phases.join(", "));
    let fired: Vec<String> = e.violation_counts.iter().filter(|(_, c)| **c > 0).map(|(k, c)| format!("{k:?}={c}")).collect();
    if fired.is_empty() {
        let _ = writeln!(s, "  monitors: none fired");
    } else {
        let _ = writeln!(s, "  monitors: {}", fired.join(" "));
        for v in e.violations.iter().take(5) {
            let _ = writeln!(s, "    {v}");
        }
    }
    s
}

pub fn summarize_sweep(entries: &[RunEntry]) -> String {
    let fired = entries.iter().filter(|e| e.violation_counts.values().any(|&c| c > 0)).count();
    let horizon = entries.iter().filter(|e| e.outcome != "completed").count();
    format!(
        "sweep: {} seeds, {} ok, {fired} with monitor violations, {horizon} did not finish\n",
        entries.len(),
        entries.iter().filter(|e| e.ok()).count()
    )
}

/// One row of the compare table: a config and one commit path.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareRow {
    pub config: String,
    pub fastlane: String,
    pub n: usize,
    pub path: String,
    pub blocks: u64,
    pub rounds_per_block: f64,
    pub msgs_per_block: f64,
    pub bytes_per_block: f64,
    /// Fastlane bytes of the busiest party per fastlane block.
    pub busiest_fastlane_bytes_per_block: f64,
}

pub fn compare_rows(label: &str, cfg: &ScenarioConfig, records: &[MetricsRecord]) -> Vec<CompareRow> {
    let mut by_path: BTreeMap<&'static str, (u64, u64, u64, u64)> = BTreeMap::new();
    for b in records.iter().flat_map(|m| &m.blocks) {
        let name = match b.path {
            Path::Fastlane => "fastlane",
            Path::Fallback => "fallback",
            Path::Help => "help",
        };
        let e = by_path.entry(name).or_default();
        e.0 += 1;
        e.1 += b.latency_rounds;
        e.2 += b.msg_count;
        e.3 += b.byte_count;
    }
    let busiest = records.iter().map(MetricsRecord::busiest_fastlane_bytes_per_block).sum::<f64>() / records.len().max(1) as f64;
    by_path
        .into_iter()
        .map(|(path, (blocks, rounds, msgs, bytes))| {
            let per = |x: u64| x as f64 / blocks as f64;
            CompareRow {
                config: label.to_string(),
                fastlane: cfg.fastlane.to_string(),
                n: cfg.n,
                path: path.to_string(),
                blocks,
                rounds_per_block: per(rounds),
                msgs_per_block: per(msgs),
                bytes_per_block: per(bytes),
                busiest_fastlane_bytes_per_block: if path == "fastlane" { busiest } else { 0.0 },
            }
        })
        .collect()
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let width = rows.iter().map(|r| r.config.len()).max().unwrap_or(6).max(6);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:<8} {:>3}  {:<8} {:>6} {:>8} {:>10} {:>11} {:>15}",
        "config", "fastlane", "n", "path", "blocks", "rounds", "msgs/blk", "bytes/blk", "busiest B/blk"
    );
    for r in rows {
        let busiest = if r.path == "fastlane" { format!("{:.1}", r.busiest_fastlane_bytes_per_block) } else { "-".into() };
        let _ = writeln!(
            s,
            "{:<width$}  {:<8} {:>3}  {:<8} {:>6} {:>8.1} {:>10.1} {:>11.1} {:>15}",
            r.config, r.fastlane, r.n, r.path, r.blocks, r.rounds_per_block, r.msgs_per_block, r.bytes_per_block, busiest
        );
    }
    s
}
