//! (t, n) threshold public-key encryption.
//!
//! Hashed ElGamal over Ristretto with a Shamir-shared secret key. A ciphertext
//! carries `U = rG`, the body XORed with a keystream derived from `r·epk`, and
//! an integrity tag binding key, `U`, body and label. Decryption shares are
//! `x_i·U` with a Chaum-Pedersen proof, so any `t` valid shares recover the
//! same key. This is CPA-style with an integrity check, not CCA-secure.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT as G;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha512};

use super::hash::{hash_parts, Digest};
use super::CryptoError;
use crate::PartyId;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    pub u: [u8; 32],
    pub body: Vec<u8>,
    pub tag: [u8; 32],
    /// Instance label (epoch and proposer); bound by the tag.
    pub label: Vec<u8>,
}

impl Ciphertext {
    pub fn digest(&self) -> Digest {
        hash_parts(&[b"tpke/ct", &self.u, &self.tag, &(self.body.len() as u64).to_be_bytes(), &self.body, &self.label])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DecShare {
    pub party: PartyId,
    pub point: [u8; 32],
    pub challenge: [u8; 32],
    pub response: [u8; 32],
}

pub struct TpkePublic {
    t: usize,
    epk: RistrettoPoint,
    verification: Vec<RistrettoPoint>,
    verified: Mutex<HashSet<Digest>>,
    /// Outcome of combining valid shares, per ciphertext digest. The
    /// combination is deterministic once the shares verify.
    opened: Mutex<HashMap<Digest, Result<Vec<u8>, CryptoError>>>,
}

impl std::fmt::Debug for TpkePublic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TpkePublic").field("t", &self.t).field("n", &self.verification.len()).finish()
    }
}

#[derive(Clone)]
pub struct TpkeSecretShare {
    party: PartyId,
    secret: Scalar,
    public: Arc<TpkePublic>,
}

impl std::fmt::Debug for TpkeSecretShare {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TpkeSecretShare(P{})", self.party)
    }
}

fn hash_to_scalar(parts: &[&[u8]]) -> Scalar {
    let mut h = Sha512::new();
    for p in parts {
        h.update(p);
    }
    Scalar::from_bytes_mod_order_wide(&h.finalize().into())
}

fn keystream_xor(key: &Digest, data: &[u8]) -> Vec<u8> {
    data.chunks(32)
        .enumerate()
        .flat_map(|(i, chunk)| {
            let block = hash_parts(&[b"tpke/stream", key.as_bytes(), &(i as u64).to_be_bytes()]);
            chunk.iter().zip(block.0).map(|(a, b)| a ^ b).collect::<Vec<u8>>()
        })
        .collect()
}

fn derive_key(shared: &RistrettoPoint, u: &[u8; 32]) -> Digest {
    hash_parts(&[b"tpke/key", shared.compress().as_bytes(), u])
}

fn tag_for(key: &Digest, u: &[u8; 32], body: &[u8], label: &[u8]) -> [u8; 32] {
    hash_parts(&[b"tpke/tag", key.as_bytes(), u, &(body.len() as u64).to_be_bytes(), body, label]).0
}

fn decompress(bytes: &[u8; 32]) -> Option<RistrettoPoint> {
    CompressedRistretto(*bytes).decompress()
}

fn lagrange_at_zero(indices: &[PartyId], i: PartyId) -> Scalar {
    let xi = Scalar::from(i as u64 + 1);
    indices.iter().filter(|&&j| j != i).fold(Scalar::ONE, |acc, &j| {
        let xj = Scalar::from(j as u64 + 1);
        acc * xj * (xj - xi).invert()
    })
}

impl TpkePublic {
    pub fn threshold(&self) -> usize {
        self.t
    }

    pub fn n(&self) -> usize {
        self.verification.len()
    }

    pub fn encryption_key_bytes(&self) -> [u8; 32] {
        self.epk.compress().to_bytes()
    }

    pub fn verification_key_bytes(&self, party: PartyId) -> Option<[u8; 32]> {
        self.verification.get(party).map(|p| p.compress().to_bytes())
    }

    pub fn encrypt<R: RngCore + CryptoRng>(&self, plaintext: &[u8], label: &[u8], rng: &mut R) -> Ciphertext {
        let r = Scalar::random(rng);
        let u = (G * r).compress().to_bytes();
        let key = derive_key(&(self.epk * r), &u);
        let body = keystream_xor(&key, plaintext);
        let tag = tag_for(&key, &u, &body, label);
        Ciphertext { u, body, tag, label: label.to_vec() }
    }

    /// Checks the Chaum-Pedersen proof that `share.point = x_i·U`.
    pub fn verify_share(&self, ct: &Ciphertext, share: &DecShare) -> bool {
        let cache_key = hash_parts(&[
            ct.digest().as_bytes(),
            &(share.party as u64).to_be_bytes(),
            &share.point,
            &share.challenge,
            &share.response,
        ]);
        if self.verified.lock().expect("cache poisoned").contains(&cache_key) {
            return true;
        }
        let ok = self.check_share(ct, share);
        if ok {
            self.verified.lock().expect("cache poisoned").insert(cache_key);
        }
        ok
    }

    fn check_share(&self, ct: &Ciphertext, share: &DecShare) -> bool {
        let (Some(vk), Some(u), Some(d)) =
            (self.verification.get(share.party), decompress(&ct.u), decompress(&share.point))
        else {
            return false;
        };
        let (Some(c), Some(z)) = (
            Option::<Scalar>::from(Scalar::from_canonical_bytes(share.challenge)),
            Option::<Scalar>::from(Scalar::from_canonical_bytes(share.response)),
        ) else {
            return false;
        };
        let a1 = G * z - vk * c;
        let a2 = u * z - d * c;
        let expect = dleq_challenge(vk, &u, &d, &a1, &a2);
        expect == c
    }

    /// Recovers the plaintext from `t` valid shares of distinct parties.
    pub fn decrypt(&self, ct: &Ciphertext, shares: &[DecShare]) -> Result<Vec<u8>, CryptoError> {
        decompress(&ct.u).ok_or(CryptoError::MalformedCiphertext)?;
        let mut picked: Vec<&DecShare> = Vec::with_capacity(self.t);
        let mut seen = HashSet::new();
        for share in shares {
            if picked.len() == self.t {
                break;
            }
            if seen.contains(&share.party) {
                continue;
            }
            if !self.verify_share(ct, share) {
                return Err(CryptoError::BadShareSet(format!("invalid decryption share from party {}", share.party)));
            }
            seen.insert(share.party);
            picked.push(share);
        }
        if picked.len() < self.t {
            return Err(CryptoError::InsufficientShares { need: self.t, have: picked.len() });
        }
        let digest = ct.digest();
        if let Some(done) = self.opened.lock().expect("cache poisoned").get(&digest) {
            return done.clone();
        }
        let result = self.combine(ct, &picked);
        self.opened.lock().expect("cache poisoned").insert(digest, result.clone());
        result
    }

    fn combine(&self, ct: &Ciphertext, picked: &[&DecShare]) -> Result<Vec<u8>, CryptoError> {
        let indices: Vec<PartyId> = picked.iter().map(|s| s.party).collect();
        let shared: RistrettoPoint = picked
            .iter()
            .map(|s| decompress(&s.point).expect("verified share") * lagrange_at_zero(&indices, s.party))
            .sum();
        let key = derive_key(&shared, &ct.u);
        if tag_for(&key, &ct.u, &ct.body, &ct.label) != ct.tag {
            return Err(CryptoError::IntegrityFailure);
        }
        Ok(keystream_xor(&key, &ct.body))
    }
}

fn dleq_challenge(
    vk: &RistrettoPoint,
    u: &RistrettoPoint,
    d: &RistrettoPoint,
    a1: &RistrettoPoint,
    a2: &RistrettoPoint,
) -> Scalar {
    hash_to_scalar(&[
        b"tpke/dleq",
        vk.compress().as_bytes(),
        u.compress().as_bytes(),
        d.compress().as_bytes(),
        a1.compress().as_bytes(),
        a2.compress().as_bytes(),
    ])
}

impl TpkeSecretShare {
    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn public(&self) -> &Arc<TpkePublic> {
        &self.public
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }

    pub fn dec_share(&self, ct: &Ciphertext) -> Result<DecShare, CryptoError> {
        let u = decompress(&ct.u).ok_or(CryptoError::MalformedCiphertext)?;
        let d = u * self.secret;
        // Deterministic nonce keeps runs reproducible.
        let w = hash_to_scalar(&[b"tpke/nonce", self.secret.as_bytes(), &ct.u]);
        let vk = &self.public.verification[self.party];
        let c = dleq_challenge(vk, &u, &d, &(G * w), &(u * w));
        let z = w + c * self.secret;
        Ok(DecShare { party: self.party, point: d.compress().to_bytes(), challenge: c.to_bytes(), response: z.to_bytes() })
    }
}

pub fn tpke_setup(t: usize, n: usize, seed: u64) -> Result<(Arc<TpkePublic>, Vec<TpkeSecretShare>), CryptoError> {
    if t == 0 || t > n {
        return Err(CryptoError::BadParams(format!("threshold needs 1 <= t <= n, got t={t} n={n}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x7470_6b65_0000_0000);
    let coeffs: Vec<Scalar> = (0..t).map(|_| Scalar::random(&mut rng)).collect();
    let eval = |x: u64| coeffs.iter().rev().fold(Scalar::ZERO, |acc, c| acc * Scalar::from(x) + c);
    let secrets: Vec<Scalar> = (1..=n as u64).map(eval).collect();
    let public = Arc::new(TpkePublic {
        t,
        epk: G * coeffs[0],
        verification: secrets.iter().map(|s| G * s).collect(),
        verified: Mutex::new(HashSet::new()),
        opened: Mutex::new(HashMap::new()),
    });
    let shares = secrets
        .into_iter()
        .enumerate()
        .map(|(party, secret)| TpkeSecretShare { party, secret, public: public.clone() })
        .collect();
    Ok((public, shares))
}
