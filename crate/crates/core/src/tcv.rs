//! Two-consecutive-value Byzantine agreement.
//!
//! Rounds follow the BVAL/AUX/coin skeleton of signature-free binary
//! agreement: a value enters `bin_values` once 2f+1 parties BVAL it (and is
//! relayed after f+1), each party AUXes its first admitted value, and `S_r` is
//! the set of admitted values carried by n-f AUX messages. The coin then
//! picks by parity:
//!
//! * `S_r = {v}` and `v % 2 == coin`: decide `v`, or halt if already decided.
//! * `S_r = {v}` otherwise: keep `v`.
//! * `S_r = {v, v+1}`: keep the element whose parity equals the coin.
//!
//! Binary agreement is the same machine run on `{0, 1}`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use crate::crypto::{CoinId, PartyKeys, SigShare};
use crate::message::{BaMsg, BlackboxMsg};
use crate::sim::Outbox;
use crate::PartyId;

/// Messages for rounds further ahead than this are dropped.
const MAX_ROUNDS_AHEAD: u32 = 64;

#[derive(Debug, Default)]
struct Round {
    bval: HashMap<u64, HashSet<PartyId>>,
    bval_sent: HashSet<u64>,
    bin_values: BTreeSet<u64>,
    first_bin: Option<u64>,
    aux: HashMap<PartyId, u64>,
    aux_sent: bool,
    s_r: Option<Vec<u64>>,
    coin_shares: Vec<SigShare>,
    coin_signers: HashSet<PartyId>,
    coin: Option<u64>,
}

/// What one round settled on, for monitors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundRecord {
    pub round: u32,
    pub s_r: Vec<u64>,
    pub coin: u64,
}

#[derive(Debug)]
pub struct Tcv {
    n: usize,
    f: usize,
    keys: Arc<PartyKeys>,
    coin_tag: Vec<u8>,
    started: bool,
    input: Option<u64>,
    round: u32,
    est: u64,
    rounds: BTreeMap<u32, Round>,
    decided: Option<u64>,
    decided_round: Option<u32>,
    halted: bool,
    history: Vec<RoundRecord>,
}

impl Tcv {
    /// `coin_tag` names the instance for its per-round coins.
    pub fn new(keys: Arc<PartyKeys>, coin_tag: impl Into<Vec<u8>>) -> Self {
        Tcv {
            n: keys.public().n(),
            f: keys.f,
            keys,
            coin_tag: coin_tag.into(),
            started: false,
            input: None,
            round: 1,
            est: 0,
            rounds: BTreeMap::new(),
            decided: None,
            decided_round: None,
            halted: false,
            history: Vec::new(),
        }
    }

    pub fn has_input(&self) -> bool {
        self.started
    }

    pub fn input_value(&self) -> Option<u64> {
        self.input
    }

    pub fn decision(&self) -> Option<u64> {
        self.decided
    }

    pub fn decided_round(&self) -> Option<u32> {
        self.decided_round
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    fn coin_id(&self, round: u32) -> CoinId {
        CoinId::new(self.coin_tag.clone(), round as u64)
    }

    pub fn input(&mut self, v: u64, out: &mut Outbox<BaMsg>) {
        if self.started {
            return;
        }
        self.started = true;
        self.input = Some(v);
        self.est = v;
        self.enter_round(out);
        self.advance(out);
    }

    pub fn handle(&mut self, from: PartyId, msg: &BaMsg, out: &mut Outbox<BaMsg>) {
        if self.halted || from >= self.n {
            return;
        }
        let r = msg.round();
        if r == 0 || r > self.round.saturating_add(MAX_ROUNDS_AHEAD) {
            return;
        }
        let (f, n) = (self.f, self.n);
        let live = self.started && r <= self.round;
        match msg {
            BaMsg::Bval { value, .. } => {
                let round = self.rounds.entry(r).or_default();
                let supporters = round.bval.entry(*value).or_default();
                if !supporters.insert(from) {
                    return;
                }
                let count = supporters.len();
                if live && count > f && round.bval_sent.insert(*value) {
                    out.multicast(BaMsg::Bval { round: r, value: *value });
                }
                if count > 2 * f && round.bin_values.insert(*value) {
                    round.first_bin.get_or_insert(*value);
                }
            }
            BaMsg::Aux { value, .. } => {
                self.rounds.entry(r).or_default().aux.entry(from).or_insert(*value);
            }
            BaMsg::CoinShare { share, .. } => {
                if share.signer != from {
                    return;
                }
                let msg = self.coin_id(r).share_message();
                if !self.keys.public().verify_share(&msg, share) {
                    return;
                }
                let round = self.rounds.entry(r).or_default();
                if round.coin_signers.insert(from) {
                    round.coin_shares.push(share.clone());
                }
            }
        }
        debug_assert!(n >= 3 * f + 1);
        if self.started {
            self.advance(out);
        }
    }

    fn enter_round(&mut self, out: &mut Outbox<BaMsg>) {
        let r = self.round;
        let est = self.est;
        let f = self.f;
        let round = self.rounds.entry(r).or_default();
        if round.bval_sent.insert(est) {
            out.multicast(BaMsg::Bval { round: r, value: est });
        }
        // Relay anything that already gathered f+1 support while we were behind.
        let mut relay: Vec<u64> = round
            .bval
            .iter()
            .filter(|(v, s)| s.len() > f && !round.bval_sent.contains(v))
            .map(|(v, _)| *v)
            .collect();
        relay.sort_unstable();
        for v in relay {
            round.bval_sent.insert(v);
            out.multicast(BaMsg::Bval { round: r, value: v });
        }
    }

    fn advance(&mut self, out: &mut Outbox<BaMsg>) {
        while !self.halted {
            let r = self.round;
            let (n, f) = (self.n, self.f);
            let share_msg = self.coin_id(r).share_message();
            let round = self.rounds.entry(r).or_default();
            if !round.aux_sent {
                let Some(w) = round.first_bin else { return };
                round.aux_sent = true;
                out.multicast(BaMsg::Aux { round: r, value: w });
            }
            if round.s_r.is_none() {
                let supported: Vec<u64> = round.aux.values().copied().filter(|v| round.bin_values.contains(v)).collect();
                if supported.len() < n - f {
                    return;
                }
                let set: BTreeSet<u64> = supported.into_iter().collect();
                round.s_r = Some(set.into_iter().collect());
                let share = self.keys.signer.sign_share(&share_msg);
                out.multicast(BaMsg::CoinShare { round: r, share });
                return;
            }
            if round.coin.is_none() {
                let id = CoinId::new(self.coin_tag.clone(), r as u64);
                match self.keys.coin.get(&id, &round.coin_shares) {
                    Ok(bit) => round.coin = Some(bit as u64),
                    Err(_) => return,
                }
            }
            let s = round.coin.expect("set above");
            let s_r = round.s_r.clone().expect("set above");
            self.history.push(RoundRecord { round: r, s_r: s_r.clone(), coin: s });
            if let [v] = s_r[..] {
                if v % 2 == s {
                    if self.decided.is_none() {
                        self.decided = Some(v);
                        self.decided_round = Some(r);
                    } else {
                        self.halted = true;
                        return;
                    }
                }
                self.est = v;
            } else {
                // Two consecutive values have opposite parity; anything else
                // means the input precondition was broken.
                self.est = s_r.iter().copied().find(|v| v % 2 == s).unwrap_or(s_r[0]);
            }
            self.round += 1;
            self.enter_round(out);
        }
    }

    /// Drops state of rounds that can no longer matter.
    pub fn prune(&mut self) {
        let keep = self.round.saturating_sub(2);
        self.rounds = self.rounds.split_off(&keep);
    }
}

/// Agreement on one of two consecutive integers through a binary agreement
/// on parity: wait for f+1 matching VALUEs, agree on that value's parity,
/// then return the value of that parity backed by f+1 VALUEs.
#[derive(Debug)]
pub struct TcvBlackbox {
    f: usize,
    n: usize,
    values: HashMap<PartyId, u64>,
    counts: BTreeMap<u64, usize>,
    sent: bool,
    aba: Tcv,
    result: Option<u64>,
}

impl TcvBlackbox {
    pub fn new(keys: Arc<PartyKeys>, coin_tag: impl Into<Vec<u8>>) -> Self {
        TcvBlackbox {
            f: keys.f,
            n: keys.public().n(),
            values: HashMap::new(),
            counts: BTreeMap::new(),
            sent: false,
            aba: Tcv::new(keys, coin_tag),
            result: None,
        }
    }

    pub fn decision(&self) -> Option<u64> {
        self.result
    }

    pub fn is_halted(&self) -> bool {
        self.aba.is_halted() && self.result.is_some()
    }

    pub fn aba(&self) -> &Tcv {
        &self.aba
    }

    pub fn input(&mut self, v: u64, out: &mut Outbox<BlackboxMsg>) {
        if !self.sent {
            self.sent = true;
            out.multicast(BlackboxMsg::Value(v));
        }
    }

    pub fn handle(&mut self, from: PartyId, msg: &BlackboxMsg, out: &mut Outbox<BlackboxMsg>) {
        if from >= self.n {
            return;
        }
        match msg {
            BlackboxMsg::Value(v) => {
                if self.values.contains_key(&from) {
                    return;
                }
                self.values.insert(from, *v);
                *self.counts.entry(*v).or_default() += 1;
            }
            BlackboxMsg::Aba(m) => {
                let mut inner = Outbox::new();
                self.aba.handle(from, m, &mut inner);
                out.extend_mapped(inner, BlackboxMsg::Aba);
            }
        }
        if !self.aba.has_input() {
            if let Some((&v, _)) = self.counts.iter().find(|(_, &c)| c > self.f) {
                let mut inner = Outbox::new();
                self.aba.input(v % 2, &mut inner);
                out.extend_mapped(inner, BlackboxMsg::Aba);
            }
        }
        if self.result.is_none() {
            if let Some(bit) = self.aba.decision() {
                self.result = self.counts.iter().find(|(v, &c)| c > self.f && *v % 2 == bit).map(|(&v, _)| v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::deal;

    fn keys(n: usize, f: usize, seed: u64) -> Vec<Arc<PartyKeys>> {
        deal(n, f, seed).unwrap().into_iter().map(Arc::new).collect()
    }

    /// Feeds one party a scripted first round whose `S_r` is `s_r`, using a
    /// dealer seed whose round-1 coin satisfies `want`.
    fn scripted_round(s_r: &[u64], want: impl Fn(u64) -> bool) -> (Tcv, u64) {
        for seed in 0..200 {
            let ks = keys(4, 1, seed);
            let id = CoinId::new(b"t".to_vec(), 1);
            let shares: Vec<_> = ks.iter().take(2).map(|k| k.signer.sign_share(&id.share_message())).collect();
            let bit = ks[0].coin.get(&id, &shares).unwrap() as u64;
            if !want(bit) {
                continue;
            }
            let mut t = Tcv::new(ks[0].clone(), b"t".to_vec());
            let mut out = Outbox::new();
            t.input(s_r[0], &mut out);
            // Everybody BVALs every value of s_r so all are admitted.
            for &v in s_r {
                for j in 0..4 {
                    t.handle(j, &BaMsg::Bval { round: 1, value: v }, &mut out);
                }
            }
            // AUX values spread over s_r.
            for j in 0..4 {
                t.handle(j, &BaMsg::Aux { round: 1, value: s_r[j % s_r.len()] }, &mut out);
            }
            for k in ks.iter().take(2) {
                let share = k.signer.sign_share(&id.share_message());
                t.handle(k.party, &BaMsg::CoinShare { round: 1, share }, &mut out);
            }
            return (t, bit);
        }
        panic!("no seed with the wanted coin");
    }

    #[test]
    fn single_value_matching_coin_decides() {
        let (t, bit) = scripted_round(&[4], |b| b == 0);
        assert_eq!(bit, 0);
        assert_eq!(t.decision(), Some(4));
        assert_eq!(t.round(), 2);
    }

    #[test]
    fn single_value_other_coin_keeps_estimate() {
        let (t, _) = scripted_round(&[4], |b| b == 1);
        assert_eq!(t.decision(), None);
        assert_eq!(t.est, 4);
        assert_eq!(t.round(), 2);
    }

    #[test]
    fn two_values_follow_coin_parity() {
        let (t, _) = scripted_round(&[4, 5], |b| b == 1);
        assert_eq!(t.history()[0].s_r, vec![4, 5]);
        assert_eq!(t.est, 5);
        assert_eq!(t.decision(), None);
        let (t, _) = scripted_round(&[4, 5], |b| b == 0);
        assert_eq!(t.est, 4);
    }

    #[test]
    fn coin_needs_f_plus_one_shares() {
        let ks = keys(4, 1, 1);
        let mut t = Tcv::new(ks[0].clone(), b"t".to_vec());
        let mut out = Outbox::new();
        t.input(3, &mut out);
        for j in 0..4 {
            t.handle(j, &BaMsg::Bval { round: 1, value: 3 }, &mut out);
            t.handle(j, &BaMsg::Aux { round: 1, value: 3 }, &mut out);
        }
        let id = CoinId::new(b"t".to_vec(), 1);
        let share = ks[0].signer.sign_share(&id.share_message());
        t.handle(0, &BaMsg::CoinShare { round: 1, share }, &mut out);
        assert_eq!(t.round(), 1);
        // A share attributed to the wrong sender does not count.
        let share = ks[2].signer.sign_share(&id.share_message());
        t.handle(1, &BaMsg::CoinShare { round: 1, share: share.clone() }, &mut out);
        assert_eq!(t.round(), 1);
        t.handle(2, &BaMsg::CoinShare { round: 1, share }, &mut out);
        assert_eq!(t.round(), 2);
    }

    #[test]
    fn lone_byzantine_value_never_enters_bin_values() {
        let ks = keys(4, 1, 1);
        let mut t = Tcv::new(ks[1].clone(), b"t".to_vec());
        let mut out = Outbox::new();
        t.input(7, &mut out);
        t.handle(3, &BaMsg::Bval { round: 1, value: 99 }, &mut out);
        t.handle(3, &BaMsg::Bval { round: 1, value: 99 }, &mut out);
        let relayed = out.into_items().iter().filter(|(_, m)| matches!(m, BaMsg::Bval { value: 99, .. })).count();
        assert_eq!(relayed, 0);
        assert!(!t.rounds[&1].bin_values.contains(&99));
    }
}
