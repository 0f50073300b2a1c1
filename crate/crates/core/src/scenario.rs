//! Builds and runs one seeded scenario with monitors and metrics attached.

use std::collections::HashMap;
use std::sync::Arc;

use crate::config::{ConfigError, FaultPlan, ScenarioConfig};
use crate::metrics::{MetricsCollector, MetricsRecord};
use crate::monitor::{Monitor, Violation, ViolationKind};
use crate::node::{BdtNode, Phase};
use crate::sim::{Limits, NetStats, Network, Outcome, Simulation, TraceEvent};
use crate::types::{Block, Tx};
use crate::PartyId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub trace: bool,
}

pub struct RunReport {
    pub seed: u64,
    pub outcome: Outcome,
    pub end_time: u64,
    pub violations: Vec<Violation>,
    pub violation_counts: Vec<(ViolationKind, u64)>,
    pub metrics: MetricsRecord,
    pub trace: Option<Vec<TraceEvent>>,
    pub stats: NetStats,
    pub plan: FaultPlan,
    pub nodes: Vec<BdtNode>,
    /// Highest notarizable fastlane slot per epoch, as seen by the monitor.
    pub notarized: Vec<u64>,
}

impl RunReport {
    /// Indices of parties that are neither faulty nor crashed.
    pub fn live_honest(&self) -> Vec<PartyId> {
        (0..self.nodes.len()).filter(|&p| self.plan.is_honest(p) && !self.plan.crashes.contains_key(&p)).collect()
    }

    pub fn safety_violations(&self) -> u64 {
        self.violation_counts.iter().map(|(_, c)| c).sum()
    }

    pub fn count(&self, kind: ViolationKind) -> u64 {
        self.violation_counts.iter().find(|(k, _)| *k == kind).map_or(0, |(_, c)| *c)
    }

    /// Every live honest party finished all epochs.
    pub fn completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    /// All live honest parties hold identical logs.
    pub fn logs_agree(&self) -> bool {
        let live = self.live_honest();
        let Some(&first) = live.first() else { return true };
        let digests = |p: PartyId| self.nodes[p].log().iter().map(Block::content_digest).collect::<Vec<_>>();
        let reference = digests(first);
        live.iter().all(|&p| digests(p) == reference)
    }

    /// Ids of injected transactions missing from some live honest log.
    pub fn uncommitted(&self) -> Vec<u64> {
        let live = self.live_honest();
        self.metrics.txs.iter().map(|t| t.id).filter(|id| live.iter().any(|&p| !self.nodes[p].is_committed(*id))).collect()
    }

    /// Epoch in which `tx` was committed by the first live honest party.
    pub fn commit_epoch(&self, tx: u64) -> Option<u64> {
        let p = *self.live_honest().first()?;
        self.nodes[p].log().iter().find(|b| b.txs.iter().any(|t| t.id == tx)).map(|b| b.epoch)
    }

    /// Whether the run is acceptable: no monitor fired and the horizon was
    /// not hit before every live honest party finished.
    pub fn ok(&self) -> bool {
        self.safety_violations() == 0 && self.completed()
    }
}

pub fn run_scenario(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunReport, ConfigError> {
    cfg.validate()?;
    let plan = cfg.fault_plan()?;
    let node_cfg = cfg.node_config();
    let behaviors: HashMap<PartyId, _> = plan.behaviors.iter().map(|(p, b)| (*p, b.clone())).collect();
    let nodes = crate::node::make_nodes(&node_cfg, &behaviors).map_err(|e| ConfigError::Field {
        field: "n".into(),
        line: None,
        message: e.to_string(),
    })?;
    let public = Arc::clone(nodes[0].public_keys());
    let honest: Vec<bool> = (0..cfg.n).map(|p| plan.is_honest(p)).collect();

    let network = Network::new(cfg.seed, cfg.delay_model()?).with_tick(cfg.tick_model()?).with_rules(cfg.delay_rules.clone());
    let mut sim = Simulation::new(nodes, network);
    sim.record_trace(opts.trace);
    for (&p, &at) in &plan.crashes {
        sim.crash(p, at);
    }
    let mut metrics = MetricsCollector::new(honest.clone());
    for i in 0..cfg.tx_count {
        let (id, at) = (i + 1, cfg.tx_start + i * cfg.tx_interval);
        sim.inject_at(at, Tx::new(id, cfg.tx_size));
        metrics.expect_tx(id, at);
    }
    let mut observer = (Monitor::new(cfg.fastlane, cfg.f, public, honest.clone()), metrics);
    let waiting: Vec<PartyId> = (0..cfg.n).filter(|p| honest[*p] && !plan.crashes.contains_key(p)).collect();
    let limits = Limits { max_time: cfg.horizon, max_events: cfg.max_events };
    let outcome = sim.run(limits, &mut observer, |procs| waiting.iter().all(|&p| procs[p].phase() == Phase::Finished));
    let end_time = sim.now();
    let (mut monitor, metrics) = observer;
    monitor.finish(end_time, sim.procs());
    let notarized = (0..=cfg.max_epochs).map(|e| monitor.notarized(e)).collect();
    let trace = sim.take_trace();
    let stats = sim.stats().clone();
    let metrics = metrics.finish(cfg.seed, end_time);
    log::info!("seed {} finished with {:?} at t={} after {} events", cfg.seed, outcome, end_time, stats.events);
    Ok(RunReport {
        seed: cfg.seed,
        outcome,
        end_time,
        violations: monitor.violations().to_vec(),
        violation_counts: monitor.counts().iter().map(|(k, c)| (*k, *c)).collect(),
        metrics,
        trace,
        stats,
        plan,
        nodes: sim.into_procs(),
        notarized,
    })
}

/// Runs `cfg` once per seed; results are ordered like `seeds`.
pub fn run_sweep(cfg: &ScenarioConfig, seeds: &[u64], opts: RunOptions) -> Result<Vec<RunReport>, ConfigError> {
    seeds.iter().map(|&seed| run_scenario(&ScenarioConfig { seed, ..cfg.clone() }, opts)).collect()
}
