//! Deterministic discrete-event network simulator.
//!
//! Parties are state machines ([`Process`]) connected by authenticated
//! point-to-point channels. The adversary controls delivery through a
//! seeded [`Network`] delay model: honest envelopes are delayed and
//! reordered but never dropped or altered. Self-addressed messages are
//! delivered locally and immediately and are not network traffic.
//!
//! Each party also owns a tick loop: a tick is a self-addressed envelope that
//! travels through the adversarial network, and a party's local notion of
//! time is the number of ticks it has received.
//!
//! Every network envelope carries a causal round: one more than the highest
//! round the sender had received when it sent. Ticks and local deliveries
//! do not advance rounds.

mod network;
mod trace;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::Arc;

pub use network::{DelayModel, DelayRule, Network};
pub use trace::{write_jsonl, TraceEvent};

use crate::message::Instance;
use crate::types::Tx;
use crate::PartyId;

/// What the simulator needs to know about a message.
pub trait NetMessage {
    fn wire_len(&self) -> usize;
    fn kind(&self) -> &'static str;
    fn instance(&self) -> Instance;
}

impl NetMessage for crate::message::Message {
    fn wire_len(&self) -> usize {
        crate::message::Message::wire_len(self)
    }

    fn kind(&self) -> &'static str {
        crate::message::Message::kind(self)
    }

    fn instance(&self) -> Instance {
        crate::message::Message::instance(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Every party, including a local copy to the sender.
    All,
    /// Every party except the sender.
    Others,
    To(PartyId),
}

/// Messages emitted while handling one event.
#[derive(Debug)]
pub struct Outbox<M> {
    items: Vec<(Target, M)>,
}

impl<M> Default for Outbox<M> {
    fn default() -> Self {
        Outbox { items: Vec::new() }
    }
}

impl<M> Outbox<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, to: PartyId, msg: M) {
        self.items.push((Target::To(to), msg));
    }

    pub fn multicast(&mut self, msg: M) {
        self.items.push((Target::All, msg));
    }

    pub fn push(&mut self, target: Target, msg: M) {
        self.items.push((target, msg));
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn drain(&mut self) -> std::vec::Drain<'_, (Target, M)> {
        self.items.drain(..)
    }

    pub fn into_items(self) -> Vec<(Target, M)> {
        self.items
    }

    /// Maps every message, e.g. to wrap a sub-protocol message.
    pub fn extend_mapped<N>(&mut self, other: Outbox<N>, f: impl Fn(N) -> M) {
        self.items.extend(other.items.into_iter().map(|(t, m)| (t, f(m))));
    }
}

/// A party's state machine.
pub trait Process {
    type Msg: NetMessage;

    fn start(&mut self, _out: &mut Outbox<Self::Msg>) {}

    fn handle(&mut self, from: PartyId, msg: &Self::Msg, out: &mut Outbox<Self::Msg>);

    fn tick(&mut self, _out: &mut Outbox<Self::Msg>) {}

    fn inject(&mut self, _tx: Tx, _out: &mut Outbox<Self::Msg>) {}

    /// Whether the simulator should keep this party's tick loop running.
    /// Checked at start and after every tick; once false the loop stops.
    fn wants_ticks(&self) -> bool {
        false
    }
}

/// One message as seen by observers at send time.
#[derive(Debug)]
pub struct Sent<'a, M> {
    pub time: u64,
    pub deliver_at: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub round: u64,
    /// Self-addressed; delivered immediately and not counted as traffic.
    pub local: bool,
    pub msg: &'a M,
}

/// Hooks for omniscient monitors and metrics.
pub trait Observer<P: Process> {
    fn on_send(&mut self, _sent: &Sent<'_, P::Msg>, _procs: &[P]) {}

    /// Called after every event once all resulting local deliveries ran.
    /// `party` is the one that stepped (`None` after an injection, which
    /// touches every party); `rounds` are the causal rounds per party.
    fn after_step(&mut self, _time: u64, _party: Option<PartyId>, _procs: &[P], _rounds: &[u64]) {}
}

impl<P: Process, A: Observer<P>, B: Observer<P>> Observer<P> for (A, B) {
    fn on_send(&mut self, sent: &Sent<'_, P::Msg>, procs: &[P]) {
        self.0.on_send(sent, procs);
        self.1.on_send(sent, procs);
    }

    fn after_step(&mut self, time: u64, party: Option<PartyId>, procs: &[P], rounds: &[u64]) {
        self.0.after_step(time, party, procs, rounds);
        self.1.after_step(time, party, procs, rounds);
    }
}

/// An observer that sees nothing.
pub struct NoObserver;

impl<P: Process> Observer<P> for NoObserver {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// The stop predicate held.
    Completed,
    /// Logical time or event budget ran out first.
    Horizon,
    /// Nothing left to deliver.
    Quiescent,
}

#[derive(Clone, Copy, Debug)]
pub struct Limits {
    pub max_time: u64,
    pub max_events: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_time: u64::MAX, max_events: 1_000_000 }
    }
}

enum EventKind<M> {
    Deliver { from: PartyId, to: PartyId, msg: Arc<M>, round: u64 },
    Tick { party: PartyId },
    Inject { tx: Tx },
}

struct Event<M> {
    time: u64,
    tiebreak: u64,
    seq: u64,
    kind: EventKind<M>,
}

impl<M> Event<M> {
    fn key(&self) -> (u64, u64, u64) {
        (self.time, self.tiebreak, self.seq)
    }
}

impl<M> PartialEq for Event<M> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<M> Eq for Event<M> {}

impl<M> PartialOrd for Event<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Event<M> {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Running totals over network envelopes (local deliveries excluded).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NetStats {
    pub messages: u64,
    pub bytes: u64,
    pub ticks: u64,
    pub events: u64,
    pub sent_by: Vec<(u64, u64)>,
}

pub struct Simulation<P: Process> {
    procs: Vec<P>,
    network: Network,
    queue: BinaryHeap<Event<P::Msg>>,
    seq: u64,
    now: u64,
    rounds: Vec<u64>,
    crash_at: Vec<Option<u64>>,
    trace: Option<Vec<TraceEvent>>,
    stats: NetStats,
    started: bool,
}

impl<P: Process> Simulation<P> {
    pub fn new(procs: Vec<P>, network: Network) -> Self {
        let n = procs.len();
        Simulation {
            procs,
            network,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            rounds: vec![0; n],
            crash_at: vec![None; n],
            trace: None,
            stats: NetStats { sent_by: vec![(0, 0); n], ..NetStats::default() },
            started: false,
        }
    }

    pub fn record_trace(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    /// The party stops sending (and processing) from `time` on; envelopes
    /// addressed to it are still delivered and counted.
    pub fn crash(&mut self, party: PartyId, time: u64) {
        self.crash_at[party] = Some(time);
    }

    pub fn is_crashed(&self, party: PartyId) -> bool {
        self.crash_at[party].is_some_and(|t| self.now >= t)
    }

    pub fn crash_schedule(&self) -> &[Option<u64>] {
        &self.crash_at
    }

    /// Schedules a transaction to enter every live party's buffer at `time`.
    pub fn inject_at(&mut self, time: u64, tx: Tx) {
        self.push(time, EventKind::Inject { tx });
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn procs(&self) -> &[P] {
        &self.procs
    }

    pub fn procs_mut(&mut self) -> &mut [P] {
        &mut self.procs
    }

    pub fn into_procs(self) -> Vec<P> {
        self.procs
    }

    pub fn round_of(&self, party: PartyId) -> u64 {
        self.rounds[party]
    }

    pub fn stats(&self) -> &NetStats {
        &self.stats
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceEvent>> {
        self.trace.take()
    }

    pub fn in_flight(&self) -> usize {
        self.queue.iter().filter(|e| matches!(e.kind, EventKind::Deliver { .. })).count()
    }

    fn push(&mut self, time: u64, kind: EventKind<P::Msg>) {
        self.seq += 1;
        let tiebreak = self.network.tiebreak(self.seq);
        self.queue.push(Event { time, tiebreak, seq: self.seq, kind });
    }

    fn crashed_at(&self, party: PartyId, time: u64) -> bool {
        self.crash_at[party].is_some_and(|t| time >= t)
    }

    /// Runs until `done` holds, the queue drains, or a limit is hit.
    pub fn run<O: Observer<P>>(
        &mut self,
        limits: Limits,
        observer: &mut O,
        mut done: impl FnMut(&[P]) -> bool,
    ) -> Outcome {
        if !self.started {
            self.started = true;
            for party in 0..self.procs.len() {
                if self.procs[party].wants_ticks() {
                    self.schedule_tick(party);
                }
                let mut out = Outbox::new();
                self.procs[party].start(&mut out);
                self.dispatch(party, out, observer);
                observer.after_step(self.now, Some(party), &self.procs, &self.rounds);
            }
        }
        loop {
            if done(&self.procs) {
                return Outcome::Completed;
            }
            if self.stats.events >= limits.max_events {
                return Outcome::Horizon;
            }
            let Some(event) = self.queue.pop() else {
                return Outcome::Quiescent;
            };
            if event.time > limits.max_time {
                self.queue.push(event);
                return Outcome::Horizon;
            }
            self.now = event.time;
            self.stats.events += 1;
            let party = self.step(event, observer);
            observer.after_step(self.now, party, &self.procs, &self.rounds);
        }
    }

    fn step<O: Observer<P>>(&mut self, event: Event<P::Msg>, observer: &mut O) -> Option<PartyId> {
        match event.kind {
            EventKind::Deliver { from, to, msg, round } => {
                if self.is_crashed(to) {
                    return None;
                }
                self.rounds[to] = self.rounds[to].max(round);
                let mut out = Outbox::new();
                self.procs[to].handle(from, &msg, &mut out);
                self.dispatch(to, out, observer);
                Some(to)
            }
            EventKind::Tick { party } => {
                if self.is_crashed(party) {
                    return None;
                }
                self.stats.ticks += 1;
                let mut out = Outbox::new();
                self.procs[party].tick(&mut out);
                self.dispatch(party, out, observer);
                if self.procs[party].wants_ticks() {
                    self.schedule_tick(party);
                }
                Some(party)
            }
            EventKind::Inject { tx } => {
                for party in 0..self.procs.len() {
                    if self.is_crashed(party) {
                        continue;
                    }
                    let mut out = Outbox::new();
                    self.procs[party].inject(tx, &mut out);
                    self.dispatch(party, out, observer);
                }
                None
            }
        }
    }

    fn schedule_tick(&mut self, party: PartyId) {
        let delay = self.network.tick_delay(party, self.now);
        self.push(self.now + delay, EventKind::Tick { party });
    }

    /// Sends network envelopes and runs local deliveries to completion.
    fn dispatch<O: Observer<P>>(&mut self, party: PartyId, out: Outbox<P::Msg>, observer: &mut O) {
        let mut local: VecDeque<Arc<P::Msg>> = VecDeque::new();
        let mut pending = out.into_items();
        loop {
            for (target, msg) in pending.drain(..) {
                let msg = Arc::new(msg);
                let n = self.procs.len();
                let (include_self, others): (bool, Box<dyn Iterator<Item = PartyId>>) = match target {
                    Target::All => (true, Box::new((0..n).filter(move |&j| j != party))),
                    Target::Others => (false, Box::new((0..n).filter(move |&j| j != party))),
                    Target::To(j) if j == party => (true, Box::new(std::iter::empty())),
                    Target::To(j) if j < n => (false, Box::new(std::iter::once(j))),
                    Target::To(_) => (false, Box::new(std::iter::empty())),
                };
                let others: Vec<PartyId> = others.collect();
                if self.crashed_at(party, self.now) {
                    continue;
                }
                let round = self.rounds[party] + 1;
                for to in others {
                    self.send_network(party, to, msg.clone(), round, observer);
                }
                if include_self {
                    let sent = Sent {
                        time: self.now,
                        deliver_at: self.now,
                        from: party,
                        to: party,
                        round: self.rounds[party],
                        local: true,
                        msg: &*msg,
                    };
                    observer.on_send(&sent, &self.procs);
                    local.push_back(msg);
                }
            }
            let Some(msg) = local.pop_front() else {
                break;
            };
            let mut out = Outbox::new();
            self.procs[party].handle(party, &msg, &mut out);
            pending = out.into_items();
        }
    }

    fn send_network<O: Observer<P>>(&mut self, from: PartyId, to: PartyId, msg: Arc<P::Msg>, round: u64, observer: &mut O) {
        let bytes = msg.wire_len() as u64;
        let delay = self.network.delay(from, to, msg.kind(), msg.instance().epoch, self.now);
        let deliver_at = self.now + delay;
        self.stats.messages += 1;
        self.stats.bytes += bytes;
        self.stats.sent_by[from].0 += 1;
        self.stats.sent_by[from].1 += bytes;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEvent {
                time: deliver_at,
                sent: self.now,
                round,
                from,
                to,
                instance: msg.instance().to_string(),
                kind: msg.kind().to_string(),
                bytes,
            });
        }
        let sent = Sent { time: self.now, deliver_at, from, to, round, local: false, msg: &*msg };
        observer.on_send(&sent, &self.procs);
        self.push(deliver_at, EventKind::Deliver { from, to, msg, round });
    }
}
