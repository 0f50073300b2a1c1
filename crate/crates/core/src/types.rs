//! Transactions, blocks and quorum proofs.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::crypto::{CombinedSig, Digest};
use crate::wire::{Reader, WireError, Writer};
use crate::{Epoch, Slot};

/// Smallest encodable transaction: the 8-byte identifier.
pub const MIN_TX_SIZE: u32 = 8;

/// A client transaction of `size` bytes whose first eight bytes are its id.
///
/// The remaining bytes are zero filler; only the length matters for
/// bandwidth accounting, so the filler is not stored.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tx {
    pub id: u64,
    pub size: u32,
}

impl Tx {
    pub fn new(id: u64, size: u32) -> Self {
        Tx { id, size: size.max(MIN_TX_SIZE) }
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.u32(self.size).u64(self.id);
        w.raw(&vec![0u8; (self.size - MIN_TX_SIZE) as usize]);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Tx, WireError> {
        let size = r.u32()?;
        if size < MIN_TX_SIZE {
            return Err(WireError::Invalid("transaction size"));
        }
        let id = r.u64()?;
        let filler = r.take((size - MIN_TX_SIZE) as usize)?;
        if filler.iter().any(|&b| b != 0) {
            return Err(WireError::Invalid("transaction filler"));
        }
        Ok(Tx { id, size })
    }

    pub fn wire_len(&self) -> usize {
        4 + self.size as usize
    }
}

impl fmt::Debug for Tx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tx{}", self.id)
    }
}

pub fn encode_txs(txs: &[Tx]) -> Vec<u8> {
    let mut w = Writer::new();
    encode_txs_into(txs, &mut w);
    w.finish()
}

pub fn encode_txs_into(txs: &[Tx], w: &mut Writer) {
    w.u64(txs.len() as u64);
    for tx in txs {
        tx.encode_into(w);
    }
}

pub fn decode_txs(r: &mut Reader<'_>) -> Result<Vec<Tx>, WireError> {
    let count = r.u64()?;
    if count > r.remaining() as u64 / 12 {
        return Err(WireError::Invalid("transaction count"));
    }
    (0..count).map(|_| Tx::decode(r)).collect()
}

pub fn txs_wire_len(txs: &[Tx]) -> usize {
    8 + txs.iter().map(Tx::wire_len).sum::<usize>()
}

/// Digest of the canonical encoding of a batch, computed without
/// materializing the filler bytes.
pub fn txs_digest(txs: &[Tx]) -> Digest {
    const ZEROS: [u8; 256] = [0; 256];
    let mut h = Sha256::new();
    h.update((txs.len() as u64).to_be_bytes());
    for tx in txs {
        h.update(tx.size.to_be_bytes());
        h.update(tx.id.to_be_bytes());
        let mut rest = (tx.size - MIN_TX_SIZE) as usize;
        while rest > 0 {
            let k = rest.min(ZEROS.len());
            h.update(&ZEROS[..k]);
            rest -= k;
        }
    }
    Digest(h.finalize().into())
}

/// Notarization evidence for one fastlane slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuorumProof {
    /// Digest of the slot's transaction batch.
    pub digest: Digest,
    pub sig: CombinedSig,
}

impl QuorumProof {
    pub fn encode_into(&self, w: &mut Writer) {
        w.digest(&self.digest).combined(&self.sig);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(QuorumProof { digest: r.digest()?, sig: r.combined()? })
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Block {
    pub epoch: Epoch,
    pub slot: Slot,
    pub txs: Vec<Tx>,
    /// `None` for blocks agreed on the pessimistic path.
    pub proof: Option<QuorumProof>,
}

impl Block {
    /// Identity of the block's content, excluding the proof (different
    /// parties may hold different but equally valid share sets).
    pub fn content_digest(&self) -> Digest {
        let body = txs_digest(&self.txs);
        crate::crypto::hash_parts(&[b"bdt/block", &self.epoch.to_be_bytes(), &self.slot.to_be_bytes(), body.as_bytes()])
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.u64(self.epoch).u64(self.slot);
        encode_txs_into(&self.txs, w);
        match &self.proof {
            None => {
                w.u8(0);
            }
            Some(p) => {
                w.u8(1);
                p.encode_into(w);
            }
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let epoch = r.u64()?;
        let slot = r.u64()?;
        let txs = decode_txs(r)?;
        let proof = match r.u8()? {
            0 => None,
            1 => Some(QuorumProof::decode(r)?),
            t => return Err(WireError::UnknownTag(t)),
        };
        Ok(Block { epoch, slot, txs, proof })
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block(e{} s{} {} txs{})", self.epoch, self.slot, self.txs.len(), if self.proof.is_some() { "" } else { " unproven" })
    }
}

/// Serializes a run of blocks for state transfer.
pub fn encode_blocks(blocks: &[Block]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(blocks.len() as u64);
    for b in blocks {
        b.encode_into(&mut w);
    }
    w.finish()
}

pub fn decode_blocks(bytes: &[u8]) -> Result<Vec<Block>, WireError> {
    let mut r = Reader::new(bytes);
    let count = r.u64()?;
    if count > bytes.len() as u64 {
        return Err(WireError::Invalid("block count"));
    }
    let blocks = (0..count).map(|_| Block::decode(&mut r)).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(blocks)
}
