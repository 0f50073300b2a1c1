//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bdt_core::bolt::FastlaneKind;
use bdt_core::config::ScenarioConfig;
use bdt_core::crypto::{deal, CoinId, PartyKeys};
use bdt_core::message::BaMsg;
use bdt_core::sim::{DelayModel, Limits, Network, NoObserver, Outbox, Outcome, Process, Simulation};
use bdt_core::acs::Acs;
use bdt_core::tcv::{Tcv, TcvBlackbox};
use bdt_core::{Message, PartyId};

/// Small scenario used by the sweeps: four blocks per epoch, two epochs.
pub fn sweep_config(n: usize, f: usize, fastlane: FastlaneKind, faults: &str, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n,
        f,
        fastlane,
        faults: faults.to_string(),
        seed,
        esize: 4,
        max_epochs: 2,
        tx_count: 16,
        ..ScenarioConfig::default()
    }
}

/// The fault mixes of the safety sweep. Crash times move with the seed so
/// that crashes land in every phase.
pub fn sweep_faults(n: usize, f: usize, seed: u64) -> Vec<(&'static str, String)> {
    let crash_at = seed % 97;
    vec![
        ("fault-free", String::new()),
        ("leader-crash", format!("crash:0@{crash_at}")),
        ("f-crashes", (0..f).map(|i| format!("crash:{}@{}", n - 1 - i, crash_at + 40 * i as u64)).collect::<Vec<_>>().join(";")),
        ("byz-leader", "byz-leader:0".to_string()),
        ("garbage-helper", "garbage:2".to_string()),
    ]
}

const TCV_TAG: &[u8] = b"test/tcv";
const BYZ_MAX_ROUND: u32 = 40;

/// How an agreement party behaves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Direct,
    Blackbox,
    /// Runs the direct protocol faithfully but with an input of its choice.
    FaultyInput,
    /// Equivocating noise around `base`.
    Noise,
}

enum Machine {
    Direct(Tcv),
    Blackbox(TcvBlackbox),
    Noise(ChaCha8Rng, BTreeSet<u32>),
}

/// One party of a standalone agreement run.
pub struct TcvParty {
    keys: Arc<PartyKeys>,
    n: usize,
    input: u64,
    base: u64,
    faulty: bool,
    machine: Machine,
}

impl TcvParty {
    pub fn decision(&self) -> Option<u64> {
        match &self.machine {
            Machine::Direct(t) => t.decision(),
            Machine::Blackbox(t) => t.decision(),
            Machine::Noise(..) => None,
        }
    }

    pub fn decided_round(&self) -> Option<u32> {
        match &self.machine {
            Machine::Direct(t) => t.decided_round(),
            Machine::Blackbox(t) => t.aba().decided_round(),
            Machine::Noise(..) => None,
        }
    }

    pub fn is_honest(&self) -> bool {
        !self.faulty
    }

    pub fn input(&self) -> u64 {
        self.input
    }

    /// Equivocates per recipient with values near and far from the honest range,
    /// and releases its coin share only some of the time.
    fn attack(&mut self, round: u32, out: &mut Outbox<Message>) {
        let Machine::Noise(rng, seen) = &mut self.machine else { return };
        if round > BYZ_MAX_ROUND || !seen.insert(round) {
            return;
        }
        let base = self.base;
        let pick = |rng: &mut ChaCha8Rng| match rng.gen_range(0..6) {
            0 => base.wrapping_sub(1),
            1 => base,
            2 => base + 1,
            3 => base + 2,
            4 => rng.gen_range(0..4),
            _ => rng.gen(),
        };
        for to in 0..self.n {
            for _ in 0..2 {
                let value = pick(rng);
                out.send(to, Message::Tcv { epoch: 1, msg: BaMsg::Bval { round, value } });
            }
            let value = pick(rng);
            out.send(to, Message::Tcv { epoch: 1, msg: BaMsg::Aux { round, value } });
        }
        if rng.gen_bool(0.5) {
            let id = CoinId::new(TCV_TAG.to_vec(), round as u64);
            let share = self.keys.signer.sign_share(&id.share_message());
            out.multicast(Message::Tcv { epoch: 1, msg: BaMsg::CoinShare { round, share } });
        }
    }
}

impl Process for TcvParty {
    type Msg = Message;

    fn start(&mut self, out: &mut Outbox<Message>) {
        let input = self.input;
        match &mut self.machine {
            Machine::Direct(t) => {
                let mut inner = Outbox::new();
                t.input(input, &mut inner);
                out.extend_mapped(inner, |msg| Message::Tcv { epoch: 1, msg });
            }
            Machine::Blackbox(t) => {
                let mut inner = Outbox::new();
                t.input(input, &mut inner);
                out.extend_mapped(inner, |msg| Message::Blackbox { epoch: 1, msg });
            }
            Machine::Noise(..) => self.attack(1, out),
        }
    }

    fn handle(&mut self, from: PartyId, msg: &Message, out: &mut Outbox<Message>) {
        match (&mut self.machine, msg) {
            (Machine::Direct(t), Message::Tcv { msg, .. }) => {
                let mut inner = Outbox::new();
                t.handle(from, msg, &mut inner);
                out.extend_mapped(inner, |msg| Message::Tcv { epoch: 1, msg });
            }
            (Machine::Blackbox(t), Message::Blackbox { msg, .. }) => {
                let mut inner = Outbox::new();
                t.handle(from, msg, &mut inner);
                out.extend_mapped(inner, |msg| Message::Blackbox { epoch: 1, msg });
            }
            (Machine::Noise(..), Message::Tcv { msg, .. }) => self.attack(msg.round(), out),
            _ => {}
        }
    }
}

pub struct TcvRun {
    pub outcome: Outcome,
    pub parties: Vec<TcvParty>,
}

impl TcvRun {
    pub fn honest(&self) -> impl Iterator<Item = &TcvParty> {
        self.parties.iter().filter(|p| p.is_honest())
    }

    pub fn decisions(&self) -> BTreeSet<Option<u64>> {
        self.honest().map(TcvParty::decision).collect()
    }

    pub fn agreement(&self) -> bool {
        self.decisions().len() == 1
    }

    pub fn terminated(&self) -> bool {
        self.honest().all(|p| p.decision().is_some())
    }

    /// The decision is some honest party's input.
    pub fn valid(&self) -> bool {
        let inputs: BTreeSet<u64> = self.honest().map(TcvParty::input).collect();
        self.honest().all(|p| p.decision().is_some_and(|d| inputs.contains(&d)))
    }
}

/// Runs one agreement instance. `parties[i]` gives the role and input of
/// party `i`; `base` centers the noise of `Role::Noise` parties.
pub fn run_agreement(f: usize, parties: &[(Role, u64)], base: u64, seed: u64) -> TcvRun {
    let n = parties.len();
    let keys = deal(n, f, seed).expect("valid parameters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973);
    let procs = keys
        .into_iter()
        .zip(parties)
        .map(|(k, &(role, input))| {
            let k = Arc::new(k);
            let machine = match role {
                Role::Direct | Role::FaultyInput => Machine::Direct(Tcv::new(k.clone(), TCV_TAG.to_vec())),
                Role::Blackbox => Machine::Blackbox(TcvBlackbox::new(k.clone(), TCV_TAG.to_vec())),
                Role::Noise => Machine::Noise(ChaCha8Rng::seed_from_u64(rng.gen()), BTreeSet::new()),
            };
            TcvParty { n, input, base, faulty: matches!(role, Role::FaultyInput | Role::Noise), machine, keys: k }
        })
        .collect();
    let network = Network::new(seed, DelayModel::Uniform(10));
    let mut sim = Simulation::new(procs, network);
    let limits = Limits { max_time: 1_000_000, max_events: 2_000_000 };
    let outcome = sim.run(limits, &mut NoObserver, |procs: &[TcvParty]| {
        procs.iter().filter(|p| p.is_honest()).all(|p| p.decision().is_some())
    });
    TcvRun { outcome, parties: sim.into_procs() }
}

/// One direct instance where the last `f` parties are noise and honest
/// inputs are drawn from `{v, v+1}`.
pub fn run_tcv(n: usize, f: usize, seed: u64) -> TcvRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7463_7600);
    let v: u64 = rng.gen_range(0..1000);
    let parties: Vec<(Role, u64)> =
        (0..n).map(|i| if i >= n - f { (Role::Noise, 0) } else { (Role::Direct, v + rng.gen_range(0..2)) }).collect();
    run_agreement(f, &parties, v, seed)
}

/// ACS party for standalone runs.
pub struct AcsParty {
    pub acs: Acs,
    me: PartyId,
}

impl Process for AcsParty {
    type Msg = Message;

    fn start(&mut self, out: &mut Outbox<Message>) {
        let payload = format!("batch from {}", self.me).into_bytes();
        self.acs.input(self.me, &payload, out);
    }

    fn handle(&mut self, from: PartyId, msg: &Message, out: &mut Outbox<Message>) {
        if let Message::Acs { proposer, msg, .. } = msg {
            self.acs.handle(from, *proposer, msg, out);
        }
    }
}

/// Runs one ACS instance with `crashed` parties silent from the start.
pub fn run_acs(n: usize, f: usize, crashed: &[PartyId], seed: u64) -> (Outcome, Vec<AcsParty>) {
    let keys = deal(n, f, seed).expect("valid parameters");
    let procs = keys.into_iter().map(|k| AcsParty { me: k.party, acs: Acs::new(1, 0, Arc::new(k)) }).collect();
    let mut sim = Simulation::new(procs, Network::new(seed, DelayModel::Uniform(10)));
    for &p in crashed {
        sim.crash(p, 0);
    }
    let live: Vec<PartyId> = (0..n).filter(|p| !crashed.contains(p)).collect();
    let limits = Limits { max_time: 1_000_000, max_events: 2_000_000 };
    let outcome = sim.run(limits, &mut NoObserver, |procs: &[AcsParty]| live.iter().all(|&p| procs[p].acs.output().is_some()));
    (outcome, sim.into_procs())
}
