use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Epoch, PartyId};

/// Base delay distribution for honest envelopes, in logical time units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelayModel {
    /// Uniform on `[1, d]`.
    Uniform(u64),
    /// Uniform on `[lo, hi]`.
    Jitter { lo: u64, hi: u64 },
    Fixed(u64),
}

impl DelayModel {
    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            DelayModel::Uniform(d) => rng.gen_range(1..=d.max(1)),
            DelayModel::Jitter { lo, hi } => rng.gen_range(lo.max(1)..=hi.max(lo.max(1))),
            DelayModel::Fixed(d) => d.max(1),
        }
    }

    pub fn max_delay(&self) -> u64 {
        match *self {
            DelayModel::Uniform(d) => d.max(1),
            DelayModel::Jitter { lo, hi } => hi.max(lo).max(1),
            DelayModel::Fixed(d) => d.max(1),
        }
    }

    /// Parses `uniform:D`, `jitter:LO:HI` or `fixed:D`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| p.trim().parse::<u64>().map_err(|_| format!("bad number {p:?} in delay {s:?}"));
        match parts.as_slice() {
            ["uniform", d] => Ok(DelayModel::Uniform(num(d)?)),
            ["fixed", d] => Ok(DelayModel::Fixed(num(d)?)),
            ["jitter", lo, hi] => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if lo > hi {
                    return Err(format!("jitter lower bound exceeds upper bound in {s:?}"));
                }
                Ok(DelayModel::Jitter { lo, hi })
            }
            _ => Err(format!("unknown delay model {s:?}")),
        }
    }
}

impl std::fmt::Display for DelayModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DelayModel::Uniform(d) => write!(f, "uniform:{d}"),
            DelayModel::Jitter { lo, hi } => write!(f, "jitter:{lo}:{hi}"),
            DelayModel::Fixed(d) => write!(f, "fixed:{d}"),
        }
    }
}

/// Extra delay applied to matching envelopes. Every `None` field matches
/// anything.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRule {
    #[serde(default)]
    pub from: Option<PartyId>,
    #[serde(default)]
    pub to: Option<PartyId>,
    #[serde(default)]
    pub kind: Option<String>,
    /// Inclusive epoch range.
    #[serde(default)]
    pub epochs: Option<(Epoch, Epoch)>,
    /// Send-time window `[start, end)`.
    #[serde(default)]
    pub window: Option<(u64, u64)>,
    pub extra: u64,
}

impl DelayRule {
    fn matches(&self, from: PartyId, to: PartyId, kind: &str, epoch: Epoch, now: u64) -> bool {
        self.from.is_none_or(|p| p == from)
            && self.to.is_none_or(|p| p == to)
            && self.kind.as_deref().is_none_or(|k| k == kind)
            && self.epochs.is_none_or(|(lo, hi)| (lo..=hi).contains(&epoch))
            && self.window.is_none_or(|(s, e)| (s..e).contains(&now))
    }
}

/// The adversarial scheduler: seeded delays plus targeted rules.
#[derive(Clone, Debug)]
pub struct Network {
    seed: u64,
    base: DelayModel,
    tick: DelayModel,
    rules: Vec<DelayRule>,
    rng: ChaCha8Rng,
}

impl Network {
    pub fn new(seed: u64, base: DelayModel) -> Self {
        Network {
            seed,
            base,
            tick: base,
            rules: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_rules(mut self, rules: Vec<DelayRule>) -> Self {
        self.rules = rules;
        self
    }

    pub fn with_tick(mut self, tick: DelayModel) -> Self {
        self.tick = tick;
        self
    }

    pub fn base(&self) -> DelayModel {
        self.base
    }

    pub fn delay(&mut self, from: PartyId, to: PartyId, kind: &str, epoch: Epoch, now: u64) -> u64 {
        let mut d = self.base.sample(&mut self.rng);
        for rule in &self.rules {
            if rule.matches(from, to, kind, epoch, now) {
                d += rule.extra;
            }
        }
        d
    }

    pub fn tick_delay(&mut self, _party: PartyId, _now: u64) -> u64 {
        self.tick.sample(&mut self.rng)
    }

    pub fn tiebreak(&self, seq: u64) -> u64 {
        splitmix64(self.seed ^ seq.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_models() {
        assert_eq!(DelayModel::parse("uniform:10"), Ok(DelayModel::Uniform(10)));
        assert_eq!(DelayModel::parse("jitter:5:15"), Ok(DelayModel::Jitter { lo: 5, hi: 15 }));
        assert!(DelayModel::parse("jitter:9:3").is_err());
        assert!(DelayModel::parse("gauss:1").is_err());
        assert_eq!(DelayModel::parse("jitter:5:15").unwrap().to_string(), "jitter:5:15");
    }

    #[test]
    fn delays_in_range_and_seeded() {
        let mut a = Network::new(7, DelayModel::Jitter { lo: 5, hi: 15 });
        let mut b = Network::new(7, DelayModel::Jitter { lo: 5, hi: 15 });
        for _ in 0..500 {
            let d = a.delay(0, 1, "echo", 1, 0);
            assert!((5..=15).contains(&d));
            assert_eq!(d, b.delay(0, 1, "echo", 1, 0));
        }
    }

    #[test]
    fn rules_add_delay_selectively() {
        let rule = DelayRule { from: Some(0), kind: Some("proposal".into()), extra: 100, ..DelayRule::default() };
        let mut net = Network::new(1, DelayModel::Fixed(3)).with_rules(vec![rule]);
        assert_eq!(net.delay(0, 1, "proposal", 1, 0), 103);
        assert_eq!(net.delay(0, 1, "vote", 1, 0), 3);
        assert_eq!(net.delay(1, 0, "proposal", 1, 0), 3);
    }
}
