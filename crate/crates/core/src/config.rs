//! Scenario files: flat TOML with one key per parameter.
//!
//! ```toml
//! n = 4
//! f = 1
//! fastlane = "hs"        # hs | rbc | timeout
//! tau = 20
//! T = 0                  # censorship timeout in ticks, 0 disables
//! Esize = 8
//! B = 8
//! delay = "uniform:10"   # uniform:D | jitter:LO:HI | fixed:D
//! faults = "crash:3@0"
//! tx_count = 40
//! sweep = [1, 2, 3]
//! ```
//!
//! Fault specs are `;`-separated entries:
//! `crash:P@T`, `silent:P@E1,E2` (or `silent:P` for every epoch),
//! `garbage:P`, `byz-leader:P`, `censor:P:TX` and `mutant:P`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bolt::FastlaneKind;
use crate::node::{Behavior, GapMode, NodeConfig, TcvMode};
use crate::sim::{DelayModel, DelayRule};
use crate::types::MIN_TX_SIZE;
use crate::{Epoch, PartyId};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{}field `{field}`: {message}", line.map(|l| format!("line {l}, ")).unwrap_or_default())]
    Field { field: String, line: Option<usize>, message: String },
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Field { field: field.to_string(), line: None, message: message.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub f: usize,
    pub fastlane: FastlaneKind,
    pub tau: u64,
    #[serde(rename = "T", alias = "censorship_timeout")]
    pub censorship_timeout: u64,
    #[serde(rename = "Esize", alias = "esize")]
    pub esize: u64,
    #[serde(rename = "B", alias = "batch")]
    pub batch: usize,
    pub tx_size: u32,
    pub empty_tail: bool,
    pub dumbo_blocks_per_fallback: u64,
    pub gap_mode: GapMode,
    pub dup_shift: bool,
    pub tcv_mode: TcvMode,
    pub max_epochs: Epoch,
    pub idle_tail: u64,
    pub seed: u64,
    pub delay: String,
    /// Delay of the self-addressed clock ticks; defaults to `delay`.
    pub tick_delay: Option<String>,
    pub delay_rules: Vec<DelayRule>,
    pub faults: String,
    pub tx_count: u64,
    pub tx_start: u64,
    pub tx_interval: u64,
    /// Logical-time horizon.
    pub horizon: u64,
    pub max_events: u64,
    pub sweep: Vec<u64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 4,
            f: 1,
            fastlane: FastlaneKind::Hs,
            tau: 20,
            censorship_timeout: 0,
            esize: 8,
            batch: 8,
            tx_size: 250,
            empty_tail: false,
            dumbo_blocks_per_fallback: 1,
            gap_mode: GapMode::Consistent,
            dup_shift: true,
            tcv_mode: TcvMode::Direct,
            max_epochs: 3,
            idle_tail: 3,
            seed: 1,
            delay: "uniform:10".to_string(),
            tick_delay: None,
            delay_rules: Vec::new(),
            faults: String::new(),
            tx_count: 32,
            tx_start: 0,
            tx_interval: 2,
            horizon: 2_000_000,
            max_events: 1_000_000,
            sweep: Vec::new(),
        }
    }
}

/// One parsed fault entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Fault {
    Crash { party: PartyId, at: u64 },
    Silent { party: PartyId, epochs: Option<BTreeSet<Epoch>> },
    Garbage { party: PartyId },
    ByzLeader { party: PartyId },
    Censor { party: PartyId, tx: u64 },
    Mutant { party: PartyId },
}

impl Fault {
    pub fn party(&self) -> PartyId {
        match self {
            Fault::Crash { party, .. }
            | Fault::Silent { party, .. }
            | Fault::Garbage { party }
            | Fault::ByzLeader { party }
            | Fault::Censor { party, .. }
            | Fault::Mutant { party } => *party,
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::Crash { party, at } => write!(f, "crash:{party}@{at}"),
            Fault::Silent { party, epochs: None } => write!(f, "silent:{party}"),
            Fault::Silent { party, epochs: Some(es) } => {
                let list: Vec<String> = es.iter().map(u64::to_string).collect();
                write!(f, "silent:{party}@{}", list.join(","))
            }
            Fault::Garbage { party } => write!(f, "garbage:{party}"),
            Fault::ByzLeader { party } => write!(f, "byz-leader:{party}"),
            Fault::Censor { party, tx } => write!(f, "censor:{party}:{tx}"),
            Fault::Mutant { party } => write!(f, "mutant:{party}"),
        }
    }
}

pub fn parse_faults(spec: &str) -> Result<Vec<Fault>, String> {
    let num = |s: &str, what: &str| s.trim().parse::<u64>().map_err(|_| format!("bad {what} {s:?}"));
    let mut out = Vec::new();
    for entry in spec.split(';').map(str::trim).filter(|e| !e.is_empty()) {
        let (kind, rest) = entry.split_once(':').ok_or_else(|| format!("fault {entry:?} lacks a party"))?;
        let fault = match kind.trim() {
            "crash" => {
                let (p, t) = rest.split_once('@').unwrap_or((rest, "0"));
                Fault::Crash { party: num(p, "party")? as PartyId, at: num(t, "time")? }
            }
            "silent" => match rest.split_once('@') {
                Some((p, es)) => {
                    let epochs = es.split(',').map(|e| num(e, "epoch")).collect::<Result<BTreeSet<_>, _>>()?;
                    Fault::Silent { party: num(p, "party")? as PartyId, epochs: Some(epochs) }
                }
                None => Fault::Silent { party: num(rest, "party")? as PartyId, epochs: None },
            },
            "garbage" => Fault::Garbage { party: num(rest, "party")? as PartyId },
            "byz-leader" => Fault::ByzLeader { party: num(rest, "party")? as PartyId },
            "censor" => {
                let (p, tx) = rest.split_once(':').ok_or_else(|| format!("censor fault {entry:?} needs party:tx"))?;
                Fault::Censor { party: num(p, "party")? as PartyId, tx: num(tx, "tx id")? }
            }
            "mutant" => Fault::Mutant { party: num(rest, "party")? as PartyId },
            other => return Err(format!("unknown behavior {other:?}")),
        };
        out.push(fault);
    }
    Ok(out)
}

/// Faults resolved into per-party behaviors and a crash schedule.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FaultPlan {
    pub behaviors: BTreeMap<PartyId, Behavior>,
    pub crashes: BTreeMap<PartyId, u64>,
}

impl FaultPlan {
    pub fn build(faults: &[Fault], max_epochs: Epoch) -> Self {
        let mut plan = FaultPlan::default();
        for fault in faults {
            let party = fault.party();
            if let Fault::Crash { at, .. } = fault {
                plan.crashes.insert(party, *at);
                continue;
            }
            let b = plan.behaviors.entry(party).or_default();
            match fault {
                Fault::Silent { epochs, .. } => {
                    b.silent_epochs.extend(epochs.clone().unwrap_or_else(|| (1..=max_epochs).collect()));
                }
                Fault::Garbage { .. } => b.garbage_help = true,
                Fault::ByzLeader { .. } => b.byzantine_leader = true,
                Fault::Censor { tx, .. } => b.censor = Some(*tx),
                Fault::Mutant { .. } => b.mutant = true,
                Fault::Crash { .. } => unreachable!(),
            }
        }
        plan
    }

    /// Parties that are crashed or deviate; the mutant fixture is excluded
    /// on purpose so that monitors treat it as honest.
    pub fn faulty(&self) -> BTreeSet<PartyId> {
        let mut s: BTreeSet<PartyId> = self.crashes.keys().copied().collect();
        s.extend(self.behaviors.iter().filter(|(_, b)| b.is_faulty()).map(|(p, _)| *p));
        s
    }

    /// Whether monitors treat the party as honest.
    pub fn is_honest(&self, party: PartyId) -> bool {
        !self.behaviors.get(&party).is_some_and(Behavior::is_faulty)
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
            ConfigError::Syntax { line, column, message: e.message().to_string() }
        })?;
        cfg.validate().map_err(|err| match err {
            ConfigError::Field { field, message, .. } => {
                let line = find_key_line(text, &field);
                ConfigError::Field { field, line, message }
            }
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    /// Fails for integers above `i64::MAX`, which TOML cannot hold.
    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    pub fn delay_model(&self) -> Result<DelayModel, ConfigError> {
        DelayModel::parse(&self.delay).map_err(|m| ConfigError::field("delay", m))
    }

    pub fn tick_model(&self) -> Result<DelayModel, ConfigError> {
        match &self.tick_delay {
            Some(s) => DelayModel::parse(s).map_err(|m| ConfigError::field("tick_delay", m)),
            None => self.delay_model(),
        }
    }

    pub fn fault_plan(&self) -> Result<FaultPlan, ConfigError> {
        let faults = parse_faults(&self.faults).map_err(|m| ConfigError::field("faults", m))?;
        if let Some(bad) = faults.iter().find(|f| f.party() >= self.n) {
            return Err(ConfigError::field("faults", format!("{bad} names a party outside 0..{}", self.n)));
        }
        let plan = FaultPlan::build(&faults, self.max_epochs);
        let faulty = plan.faulty().len();
        if faulty > self.f {
            return Err(ConfigError::field("faults", format!("{faulty} faulty parties exceed f = {}", self.f)));
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 3 * self.f + 1 {
            return Err(ConfigError::field("n", format!("n = {} is below 3f+1 = {}", self.n, 3 * self.f + 1)));
        }
        if self.f == 0 {
            return Err(ConfigError::field("f", "at least one fault must be tolerated"));
        }
        if self.tau == 0 {
            return Err(ConfigError::field("tau", "must be at least 1"));
        }
        if self.esize == 0 {
            return Err(ConfigError::field("Esize", "must be at least 1"));
        }
        if self.batch == 0 {
            return Err(ConfigError::field("B", "must be at least 1"));
        }
        if self.tx_size < MIN_TX_SIZE {
            return Err(ConfigError::field("tx_size", format!("must be at least {MIN_TX_SIZE} bytes")));
        }
        if self.dumbo_blocks_per_fallback == 0 {
            return Err(ConfigError::field("dumbo_blocks_per_fallback", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(ConfigError::field("max_epochs", "must be at least 1"));
        }
        if let Some(r) = self.delay_rules.iter().find(|r| r.from.is_some_and(|p| p >= self.n) || r.to.is_some_and(|p| p >= self.n)) {
            return Err(ConfigError::field("delay_rules", format!("rule {r:?} names a party outside 0..{}", self.n)));
        }
        self.delay_model()?;
        self.tick_model()?;
        self.fault_plan()?;
        Ok(())
    }

    pub fn node_config(&self) -> NodeConfig {
        NodeConfig {
            n: self.n,
            f: self.f,
            fastlane: self.fastlane,
            tau: self.tau,
            censorship_timeout: self.censorship_timeout,
            esize: self.esize,
            batch: self.batch,
            empty_tail: self.empty_tail,
            dumbo_blocks_per_fallback: self.dumbo_blocks_per_fallback,
            gap_mode: self.gap_mode,
            dup_shift: self.dup_shift,
            tcv_mode: self.tcv_mode,
            max_epochs: self.max_epochs,
            idle_tail: self.idle_tail,
            seed: self.seed,
        }
    }

    /// Seeds to run: the sweep list, or the single `seed`.
    pub fn seeds(&self) -> Vec<u64> {
        if self.sweep.is_empty() {
            vec![self.seed]
        } else {
            self.sweep.clone()
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn find_key_line(text: &str, field: &str) -> Option<usize> {
    text.lines().position(|l| l.split('=').next().is_some_and(|k| k.trim() == field)).map(|i| i + 1)
}
