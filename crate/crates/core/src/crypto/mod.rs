//! Contract-level cryptographic primitives.

pub mod coin;
pub mod erasure;
pub mod hash;
pub mod merkle;
pub mod tpke;
pub mod tsig;

use std::sync::Arc;

use thiserror::Error;

pub use coin::{CoinError, CoinId, CoinOracle};
pub use erasure::{erasure_decode, erasure_encode};
pub use hash::{hash, hash_parts, Digest};
pub use merkle::{merkle_build, merkle_verify, merkle_verify_at, MerkleProof};
pub use tpke::{tpke_setup, Ciphertext, DecShare, TpkePublic, TpkeSecretShare};
pub use tsig::{tsig_setup, CombinedSig, PublicKeys, SigShare, SigningShare, ThresholdScheme};

use crate::PartyId;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("empty Merkle tree")]
    EmptyTree,
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("need {need} fragments, have {have}")]
    InsufficientFragments { need: usize, have: usize },
    #[error("corrupt fragment: {0}")]
    CorruptFragment(String),
    #[error("bad share set: {0}")]
    BadShareSet(String),
    #[error("need {need} decryption shares, have {have}")]
    InsufficientShares { need: usize, have: usize },
    #[error("malformed ciphertext")]
    MalformedCiphertext,
    #[error("ciphertext integrity tag mismatch")]
    IntegrityFailure,
}

/// Everything one party holds after the trusted setup.
#[derive(Clone, Debug)]
pub struct PartyKeys {
    pub party: PartyId,
    pub f: usize,
    pub signer: SigningShare,
    pub decryptor: TpkeSecretShare,
    pub coin: Arc<CoinOracle>,
}

impl PartyKeys {
    pub fn public(&self) -> &Arc<PublicKeys> {
        self.signer.public()
    }

    pub fn tpke(&self) -> &Arc<TpkePublic> {
        self.decryptor.public()
    }

    /// Deterministic key blob for replay checks.
    ///
    /// Layout: `b"BDTK"`, version byte `1`, then `party`, `n`, `f` as u32
    /// little-endian, the 32-byte signing secret, the 32-byte decryption
    /// share, `n` 32-byte signature verification keys, `n` 32-byte decryption
    /// verification points and the 32-byte encryption key.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.public().n();
        let mut out = Vec::with_capacity(4 + 1 + 12 + 64 + 64 * n + 32);
        out.extend_from_slice(b"BDTK");
        out.push(1);
        for v in [self.party, n, self.f] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.signer.secret_bytes());
        out.extend_from_slice(&self.decryptor.secret_bytes());
        for i in 0..n {
            out.extend_from_slice(self.public().verifying_key(i).expect("in range").as_bytes());
        }
        for i in 0..n {
            out.extend_from_slice(&self.tpke().verification_key_bytes(i).expect("in range"));
        }
        out.extend_from_slice(&self.tpke().encryption_key_bytes());
        out
    }
}

/// Seeded dealer for a run with `n` parties tolerating `f` faults.
///
/// Signature shares are shared by every threshold use (2f+1 notarization,
/// f+1 coin release); the decryption threshold is `f + 1`.
pub fn deal(n: usize, f: usize, seed: u64) -> Result<Vec<PartyKeys>, CryptoError> {
    if n < 3 * f + 1 {
        return Err(CryptoError::BadParams(format!("need n >= 3f+1, got n={n} f={f}")));
    }
    let (scheme, signers) = tsig_setup(1, n, seed)?;
    let (_, decryptors) = tpke_setup(f + 1, n, seed)?;
    let coin = Arc::new(CoinOracle::new(seed, f, scheme.public.clone()));
    Ok(signers
        .into_iter()
        .zip(decryptors)
        .map(|(signer, decryptor)| PartyKeys { party: signer.party(), f, signer, decryptor, coin: coin.clone() })
        .collect())
}
