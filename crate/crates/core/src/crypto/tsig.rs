//! (t, n) threshold signatures realized as a transparent multi-signature.
//!
//! Every party holds an Ed25519 key issued by a seeded dealer. A combined
//! signature is the set of `t` individual shares from distinct signers, so
//! robustness and unforgeability follow directly from the per-share scheme.
//! Signatures are `O(t)` in size; byte metrics report this realization as is.

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::hash::{hash_parts, Digest};
use super::CryptoError;
use crate::PartyId;

pub const SHARE_LEN: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SigShare {
    pub signer: PartyId,
    pub payload: [u8; SHARE_LEN],
}

impl std::fmt::Debug for SigShare {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigShare(P{}, {:02x}{:02x}..)", self.signer, self.payload[0], self.payload[1])
    }
}

/// `t` shares from distinct signers, ordered by signer index.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CombinedSig {
    pub shares: Vec<SigShare>,
}

impl CombinedSig {
    pub fn signers(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.shares.iter().map(|s| s.signer)
    }
}

/// Public verification material shared by every party of one run.
pub struct PublicKeys {
    verifying: Vec<VerifyingKey>,
    // Digests of (signer, message, share) triples that already verified.
    // Every party checks the same shares, so this removes most of the work.
    verified: Mutex<HashSet<Digest>>,
}

impl std::fmt::Debug for PublicKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PublicKeys").field("n", &self.verifying.len()).finish()
    }
}

impl PublicKeys {
    pub fn new(verifying: Vec<VerifyingKey>) -> Self {
        PublicKeys { verifying, verified: Mutex::new(HashSet::new()) }
    }

    pub fn n(&self) -> usize {
        self.verifying.len()
    }

    pub fn verifying_key(&self, party: PartyId) -> Option<&VerifyingKey> {
        self.verifying.get(party)
    }

    pub fn verify_share(&self, msg: &[u8], share: &SigShare) -> bool {
        let Some(vk) = self.verifying.get(share.signer) else {
            return false;
        };
        let key = hash_parts(&[&(share.signer as u64).to_be_bytes(), &share.payload, msg]);
        if self.verified.lock().expect("cache poisoned").contains(&key) {
            return true;
        }
        let ok = vk.verify(msg, &Signature::from_bytes(&share.payload)).is_ok();
        if ok {
            self.verified.lock().expect("cache poisoned").insert(key);
        }
        ok
    }

    /// Combines exactly `t` valid shares from distinct signers.
    pub fn combine(&self, t: usize, msg: &[u8], shares: &[SigShare]) -> Result<CombinedSig, CryptoError> {
        if shares.len() < t {
            return Err(CryptoError::BadShareSet(format!("need {t} shares, got {}", shares.len())));
        }
        let mut picked: Vec<SigShare> = shares[..t].to_vec();
        picked.sort_by_key(|s| s.signer);
        if picked.windows(2).any(|w| w[0].signer == w[1].signer) {
            return Err(CryptoError::BadShareSet("duplicate signer".into()));
        }
        if let Some(bad) = picked.iter().find(|s| !self.verify_share(msg, s)) {
            return Err(CryptoError::BadShareSet(format!("invalid share from party {}", bad.signer)));
        }
        Ok(CombinedSig { shares: picked })
    }

    /// True iff `sig` holds exactly `t` valid shares over `msg` from distinct signers.
    pub fn verify(&self, t: usize, msg: &[u8], sig: &CombinedSig) -> bool {
        sig.shares.len() == t
            && sig.shares.windows(2).all(|w| w[0].signer < w[1].signer)
            && sig.shares.iter().all(|s| self.verify_share(msg, s))
    }
}

/// A party's signing key together with the shared public material.
#[derive(Clone)]
pub struct SigningShare {
    party: PartyId,
    key: SigningKey,
    public: Arc<PublicKeys>,
}

impl std::fmt::Debug for SigningShare {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigningShare(P{})", self.party)
    }
}

impl SigningShare {
    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn public(&self) -> &Arc<PublicKeys> {
        &self.public
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn sign_share(&self, msg: &[u8]) -> SigShare {
        SigShare { signer: self.party, payload: self.key.sign(msg).to_bytes() }
    }
}

/// A threshold view over the shared public keys.
#[derive(Clone, Debug)]
pub struct ThresholdScheme {
    pub t: usize,
    pub public: Arc<PublicKeys>,
}

impl ThresholdScheme {
    pub fn verify_share(&self, msg: &[u8], share: &SigShare) -> bool {
        self.public.verify_share(msg, share)
    }

    pub fn combine(&self, msg: &[u8], shares: &[SigShare]) -> Result<CombinedSig, CryptoError> {
        self.public.combine(self.t, msg, shares)
    }

    pub fn verify(&self, msg: &[u8], sig: &CombinedSig) -> bool {
        self.public.verify(self.t, msg, sig)
    }
}

/// Seeded dealer: identical `(t, n, seed)` always yields identical keys.
pub fn tsig_setup(t: usize, n: usize, seed: u64) -> Result<(ThresholdScheme, Vec<SigningShare>), CryptoError> {
    if t == 0 || t > n {
        return Err(CryptoError::BadParams(format!("threshold needs 1 <= t <= n, got t={t} n={n}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x7473_6967_0000_0000);
    let keys: Vec<SigningKey> = (0..n).map(|_| SigningKey::generate(&mut rng)).collect();
    let public = Arc::new(PublicKeys::new(keys.iter().map(SigningKey::verifying_key).collect()));
    let shares = keys
        .into_iter()
        .enumerate()
        .map(|(party, key)| SigningShare { party, key, public: public.clone() })
        .collect();
    Ok((ThresholdScheme { t, public }, shares))
}
