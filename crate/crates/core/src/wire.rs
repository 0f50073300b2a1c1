//! Big-endian byte encoding helpers shared by every message type.

use thiserror::Error;

use crate::crypto::merkle::MerkleProof;
use crate::crypto::{CombinedSig, Digest, SigShare};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("unknown tag {0}")]
    UnknownTag(u8),
    #[error("invalid field: {0}")]
    Invalid(&'static str),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    /// Length-prefixed (u32) byte string.
    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.u32(bytes.len() as u32).raw(bytes)
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.raw(d.as_bytes())
    }

    pub fn share(&mut self, s: &SigShare) -> &mut Self {
        self.u64(s.signer as u64).raw(&s.payload)
    }

    pub fn combined(&mut self, sig: &CombinedSig) -> &mut Self {
        self.u32(sig.shares.len() as u32);
        for s in &sig.shares {
            self.share(s);
        }
        self
    }

    pub fn merkle(&mut self, proof: &MerkleProof) -> &mut Self {
        self.digest(&proof.root).u64(proof.leaf_index as u64).u32(proof.branch.len() as u32);
        for d in &proof.branch {
            self.digest(d);
        }
        self
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    pub fn finish(self) -> Result<(), WireError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(WireError::Trailing(self.buf.len()))
        }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, WireError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    pub fn digest(&mut self) -> Result<Digest, WireError> {
        Ok(Digest(self.array()?))
    }

    pub fn share(&mut self) -> Result<SigShare, WireError> {
        let signer = self.u64()? as usize;
        Ok(SigShare { signer, payload: self.array()? })
    }

    pub fn combined(&mut self) -> Result<CombinedSig, WireError> {
        let count = self.u32()? as usize;
        if count > self.remaining() / 72 {
            return Err(WireError::Invalid("share count"));
        }
        let shares = (0..count).map(|_| self.share()).collect::<Result<_, _>>()?;
        Ok(CombinedSig { shares })
    }

    pub fn merkle(&mut self) -> Result<MerkleProof, WireError> {
        let root = self.digest()?;
        let leaf_index = self.u64()? as usize;
        let len = self.u32()? as usize;
        if len > 64 {
            return Err(WireError::Invalid("branch length"));
        }
        let branch = (0..len).map(|_| self.digest()).collect::<Result<_, _>>()?;
        Ok(MerkleProof { root, leaf_index, branch })
    }
}
