//! Asynchronous common subset: n reliable broadcasts plus n binary
//! agreements deciding which broadcasts make it into the output.

use std::sync::Arc;

use crate::bolt::prbc::{Prbc, PrbcOutput};
use crate::crypto::PartyKeys;
use crate::message::{AcsSub, Message};
use crate::sim::Outbox;
use crate::tcv::Tcv;
use crate::{Epoch, PartyId};

#[derive(Debug)]
pub struct Acs {
    epoch: Epoch,
    index: u64,
    n: usize,
    f: usize,
    rbc: Vec<Prbc>,
    aba: Vec<Tcv>,
    delivered: Vec<Option<Vec<u8>>>,
    decided: Vec<Option<u64>>,
    input_sent: bool,
    output: Option<Vec<(PartyId, Vec<u8>)>>,
    evidence: Vec<String>,
}

impl Acs {
    /// One ACS instance; `index` distinguishes several instances per epoch.
    pub fn new(epoch: Epoch, index: u64, keys: Arc<PartyKeys>) -> Self {
        let n = keys.public().n();
        let rbc = (0..n).map(|j| Prbc::new(j, keys.clone(), None)).collect();
        let aba = (0..n)
            .map(|j| {
                let mut tag = b"bdt/acs-aba".to_vec();
                tag.extend_from_slice(&epoch.to_be_bytes());
                tag.extend_from_slice(&index.to_be_bytes());
                tag.extend_from_slice(&(j as u64).to_be_bytes());
                Tcv::new(keys.clone(), tag)
            })
            .collect();
        Acs {
            epoch,
            index,
            n,
            f: keys.f,
            rbc,
            aba,
            delivered: vec![None; n],
            decided: vec![None; n],
            input_sent: false,
            output: None,
            evidence: Vec::new(),
        }
    }

    pub fn output(&self) -> Option<&[(PartyId, Vec<u8>)]> {
        self.output.as_deref()
    }

    pub fn has_input(&self) -> bool {
        self.input_sent
    }

    pub fn evidence(&self) -> &[String] {
        &self.evidence
    }

    pub fn aba(&self, j: PartyId) -> &Tcv {
        &self.aba[j]
    }

    pub fn rbc_delivered(&self, j: PartyId) -> bool {
        self.delivered[j].is_some()
    }

    /// All agreements halted: the instance will never send again.
    pub fn is_quiet(&self) -> bool {
        self.output.is_some() && self.aba.iter().all(Tcv::is_halted)
    }

    fn wrap(&self, proposer: PartyId, out: &mut Outbox<Message>, sub: Outbox<AcsSub>) {
        let (epoch, index) = (self.epoch, self.index);
        out.extend_mapped(sub, |msg| Message::Acs { epoch, index, proposer, msg });
    }

    pub fn input(&mut self, me: PartyId, payload: &[u8], out: &mut Outbox<Message>) {
        if self.input_sent {
            return;
        }
        self.input_sent = true;
        let mut inner = Outbox::new();
        self.rbc[me].broadcast(payload, &mut inner);
        let mut sub = Outbox::new();
        sub.extend_mapped(inner, AcsSub::Rbc);
        self.wrap(me, out, sub);
    }

    pub fn handle(&mut self, from: PartyId, proposer: PartyId, msg: &AcsSub, out: &mut Outbox<Message>) {
        if proposer >= self.n {
            return;
        }
        let mut sub = Outbox::new();
        match msg {
            AcsSub::Rbc(m) => {
                let mut inner = Outbox::new();
                for o in self.rbc[proposer].handle(from, m, &mut inner) {
                    match o {
                        PrbcOutput::Delivered(p) => self.delivered[proposer] = Some(p),
                        PrbcOutput::Evidence(e) => self.evidence.push(e),
                        PrbcOutput::Finalized(_) => {}
                    }
                }
                sub.extend_mapped(inner, AcsSub::Rbc);
                if self.delivered[proposer].is_some() && !self.aba[proposer].has_input() {
                    let mut inner = Outbox::new();
                    self.aba[proposer].input(1, &mut inner);
                    sub.extend_mapped(inner, AcsSub::Aba);
                }
            }
            AcsSub::Aba(m) => {
                let mut inner = Outbox::new();
                self.aba[proposer].handle(from, m, &mut inner);
                sub.extend_mapped(inner, AcsSub::Aba);
            }
        }
        self.wrap(proposer, out, sub);
        self.after_decisions(out);
    }

    fn after_decisions(&mut self, out: &mut Outbox<Message>) {
        let mut changed = true;
        while changed {
            changed = false;
            for j in 0..self.n {
                if self.decided[j].is_none() {
                    if let Some(b) = self.aba[j].decision() {
                        self.decided[j] = Some(b);
                        changed = true;
                    }
                }
            }
            let ones = self.decided.iter().filter(|d| **d == Some(1)).count();
            if ones >= self.n - self.f {
                for j in 0..self.n {
                    if !self.aba[j].has_input() {
                        let mut inner = Outbox::new();
                        self.aba[j].input(0, &mut inner);
                        let mut sub = Outbox::new();
                        sub.extend_mapped(inner, AcsSub::Aba);
                        self.wrap(j, out, sub);
                        changed = true;
                    }
                }
            }
        }
        if self.output.is_none() && self.decided.iter().all(Option::is_some) {
            let chosen: Vec<PartyId> = (0..self.n).filter(|&j| self.decided[j] == Some(1)).collect();
            if chosen.iter().all(|&j| self.delivered[j].is_some()) {
                self.output = Some(chosen.into_iter().map(|j| (j, self.delivered[j].clone().expect("checked"))).collect());
            }
        }
    }
}
