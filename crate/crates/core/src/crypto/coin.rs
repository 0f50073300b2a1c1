//! Common coin backed by a simulator-held PRF key.
//!
//! A party releases its coin share by signing the coin id. The oracle answers
//! only when shown `f + 1` valid shares from distinct parties, so at least one
//! honest party must have released before anyone learns the value.

use std::fmt;
use std::sync::Arc;

use super::hash::hash_parts;
use super::tsig::{PublicKeys, SigShare};
use crate::PartyId;

/// Names one coin: protocol instance plus round.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoinId {
    pub instance: Vec<u8>,
    pub round: u64,
}

impl CoinId {
    pub fn new(instance: impl Into<Vec<u8>>, round: u64) -> Self {
        CoinId { instance: instance.into(), round }
    }

    /// The message a party signs to release its share.
    pub fn share_message(&self) -> Vec<u8> {
        let mut msg = b"bdt/coin/".to_vec();
        msg.extend_from_slice(&(self.instance.len() as u32).to_be_bytes());
        msg.extend_from_slice(&self.instance);
        msg.extend_from_slice(&self.round.to_be_bytes());
        msg
    }
}

impl fmt::Debug for CoinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoinId({}, r{})", String::from_utf8_lossy(&self.instance), self.round)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoinError {
    /// Fewer than `f + 1` distinct valid shares were presented.
    Pending { released: usize, needed: usize },
}

pub struct CoinOracle {
    secret: [u8; 32],
    gate: usize,
    public: Arc<PublicKeys>,
}

impl fmt::Debug for CoinOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoinOracle").field("gate", &self.gate).finish_non_exhaustive()
    }
}

impl CoinOracle {
    /// `f` is the fault bound; the release gate is `f + 1`.
    pub fn new(seed: u64, f: usize, public: Arc<PublicKeys>) -> Self {
        let secret = hash_parts(&[b"bdt/coin-dealer", &seed.to_be_bytes()]).0;
        CoinOracle { secret, gate: f + 1, public }
    }

    pub fn gate(&self) -> usize {
        self.gate
    }

    /// Returns the coin bit once enough distinct valid shares are shown.
    pub fn get(&self, id: &CoinId, shares: &[SigShare]) -> Result<bool, CoinError> {
        let msg = id.share_message();
        let mut released: Vec<PartyId> = shares
            .iter()
            .filter(|s| self.public.verify_share(&msg, s))
            .map(|s| s.signer)
            .collect();
        released.sort_unstable();
        released.dedup();
        if released.len() < self.gate {
            return Err(CoinError::Pending { released: released.len(), needed: self.gate });
        }
        Ok(self.value(id))
    }

    fn value(&self, id: &CoinId) -> bool {
        let d = hash_parts(&[b"bdt/coin-prf", &self.secret, &id.share_message()]);
        d.0[31] & 1 == 1
    }
}

#[cfg(test)]
mod tests {
    use super::super::tsig::tsig_setup;
    use super::*;

    fn shares_for(keys: &[super::super::tsig::SigningShare], id: &CoinId, who: &[usize]) -> Vec<SigShare> {
        who.iter().map(|&i| keys[i].sign_share(&id.share_message())).collect()
    }

    #[test]
    fn gated_on_f_plus_one() {
        let (scheme, keys) = tsig_setup(2, 4, 3).unwrap();
        let coin = CoinOracle::new(7, 1, scheme.public.clone());
        let id = CoinId::new("tcv/e1", 1);
        let one = shares_for(&keys, &id, &[2]);
        assert_eq!(coin.get(&id, &one), Err(CoinError::Pending { released: 1, needed: 2 }));
        let dup = shares_for(&keys, &id, &[2, 2]);
        assert!(coin.get(&id, &dup).is_err());
        // Shares for another id do not count.
        let other = shares_for(&keys, &CoinId::new("tcv/e1", 2), &[0, 1]);
        assert!(coin.get(&id, &other).is_err());
    }

    #[test]
    fn agreement_across_share_sets() {
        let (scheme, keys) = tsig_setup(2, 4, 3).unwrap();
        let coin = CoinOracle::new(7, 1, scheme.public.clone());
        let id = CoinId::new("aba", 4);
        let a = coin.get(&id, &shares_for(&keys, &id, &[0, 1])).unwrap();
        let b = coin.get(&id, &shares_for(&keys, &id, &[2, 3])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn roughly_uniform_over_ids() {
        // Chi-square with one degree of freedom; 10.83 is the 0.1% critical value.
        let (scheme, keys) = tsig_setup(1, 1, 3).unwrap();
        let coin = CoinOracle::new(11, 0, scheme.public.clone());
        let ones = (0..1000u64)
            .filter(|&r| {
                let id = CoinId::new("chi", r);
                coin.get(&id, &shares_for(&keys, &id, &[0])).unwrap()
            })
            .count() as f64;
        let zeros = 1000.0 - ones;
        let chi2 = (ones - 500.0).powi(2) / 500.0 + (zeros - 500.0).powi(2) / 500.0;
        assert!(chi2 < 10.83, "chi2 = {chi2}");
    }
}
