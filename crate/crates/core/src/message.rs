//! Protocol messages and their byte-exact wire encodings.
//!
//! Every integer is big-endian. Epochs, slots, party indices and values are
//! 8 bytes; lengths, counts and agreement rounds are 4 bytes (transaction
//! and block counts are 8). `wire_len` is kept in sync with `encode` and is
//! what the simulator uses for byte metrics.

use std::fmt;

use crate::crypto::merkle::MerkleProof;
use crate::crypto::{DecShare, Digest, SigShare};
use crate::types::{decode_txs, encode_txs_into, txs_wire_len, QuorumProof, Tx};
use crate::wire::{Reader, WireError, Writer};
use crate::{Epoch, PartyId, Slot};

/// Reliable-broadcast traffic for one instance.
#[derive(Clone, PartialEq, Eq)]
pub enum PrbcMsg {
    /// Sender to party `j`: the `j`-th fragment with its branch.
    Val { root: Digest, fragment: Vec<u8>, proof: MerkleProof },
    /// Relay of the receiver's own fragment to everyone.
    Echo { root: Digest, fragment: Vec<u8>, proof: MerkleProof },
    Ready { root: Digest },
    /// Signature share over the instance id, sent after delivery.
    Done { share: SigShare },
}

/// Binary / two-consecutive-value agreement traffic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BaMsg {
    Bval { round: u32, value: u64 },
    Aux { round: u32, value: u64 },
    CoinShare { round: u32, share: SigShare },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AcsSub {
    Rbc(PrbcMsg),
    Aba(BaMsg),
}

/// Messages of the black-box two-consecutive-value construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlackboxMsg {
    Value(u64),
    Aba(BaMsg),
}

#[derive(Clone, PartialEq, Eq)]
pub enum Message {
    Proposal { epoch: Epoch, slot: Slot, txs: Vec<Tx>, prev: Option<QuorumProof> },
    Vote { epoch: Epoch, slot: Slot, share: SigShare },
    Prbc { epoch: Epoch, slot: Slot, msg: PrbcMsg },
    PaceSync { epoch: Epoch, slot: Slot, proof: Option<QuorumProof> },
    Tcv { epoch: Epoch, msg: BaMsg },
    Acs { epoch: Epoch, index: u64, proposer: PartyId, msg: AcsSub },
    Dec { epoch: Epoch, index: u64, proposer: PartyId, share: DecShare },
    CallHelp { epoch: Epoch, tip: u64, gap: u64 },
    Help { epoch: Epoch, tip: u64, gap: u64, root: Digest, fragment: Vec<u8>, proof: MerkleProof },
    Blackbox { epoch: Epoch, msg: BlackboxMsg },
}

/// Hierarchical instance tag used by traces and metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instance {
    pub epoch: Epoch,
    pub protocol: &'static str,
    pub sub: u64,
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}/{}/{}", self.epoch, self.protocol, self.sub)
    }
}

const SHARE_WIRE: usize = 8 + 64;
const DEC_SHARE_WIRE: usize = 8 + 96;

fn proof_len(p: &Option<QuorumProof>) -> usize {
    1 + p.as_ref().map_or(0, |q| 32 + 4 + q.sig.shares.len() * SHARE_WIRE)
}

fn fragment_len(fragment: &[u8], proof: &MerkleProof) -> usize {
    32 + 8 + 4 + fragment.len() + 4 + 32 * proof.branch.len()
}

impl PrbcMsg {
    pub fn kind(&self) -> &'static str {
        match self {
            PrbcMsg::Val { .. } => "val",
            PrbcMsg::Echo { .. } => "echo",
            PrbcMsg::Ready { .. } => "ready",
            PrbcMsg::Done { .. } => "done",
        }
    }

    fn wire_len(&self) -> usize {
        1 + match self {
            PrbcMsg::Val { fragment, proof, .. } | PrbcMsg::Echo { fragment, proof, .. } => fragment_len(fragment, proof),
            PrbcMsg::Ready { .. } => 32,
            PrbcMsg::Done { .. } => SHARE_WIRE,
        }
    }

    fn encode_into(&self, w: &mut Writer) {
        match self {
            PrbcMsg::Val { root, fragment, proof } | PrbcMsg::Echo { root, fragment, proof } => {
                w.u8(if matches!(self, PrbcMsg::Val { .. }) { 1 } else { 2 });
                encode_fragment(w, root, fragment, proof);
            }
            PrbcMsg::Ready { root } => {
                w.u8(3).digest(root);
            }
            PrbcMsg::Done { share } => {
                w.u8(4).share(share);
            }
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(match r.u8()? {
            1 => {
                let (root, fragment, proof) = decode_fragment(r)?;
                PrbcMsg::Val { root, fragment, proof }
            }
            2 => {
                let (root, fragment, proof) = decode_fragment(r)?;
                PrbcMsg::Echo { root, fragment, proof }
            }
            3 => PrbcMsg::Ready { root: r.digest()? },
            4 => PrbcMsg::Done { share: r.share()? },
            t => return Err(WireError::UnknownTag(t)),
        })
    }
}

impl fmt::Debug for PrbcMsg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrbcMsg::Val { root, fragment, proof } => {
                write!(f, "Val({:?}, #{}, {}B)", root, proof.leaf_index, fragment.len())
            }
            PrbcMsg::Echo { root, fragment, proof } => {
                write!(f, "Echo({:?}, #{}, {}B)", root, proof.leaf_index, fragment.len())
            }
            PrbcMsg::Ready { root } => write!(f, "Ready({root:?})"),
            PrbcMsg::Done { share } => write!(f, "Done({share:?})"),
        }
    }
}

fn encode_fragment(w: &mut Writer, root: &Digest, fragment: &[u8], proof: &MerkleProof) {
    w.digest(root).u64(proof.leaf_index as u64).bytes(fragment).u32(proof.branch.len() as u32);
    for d in &proof.branch {
        w.digest(d);
    }
}

fn decode_fragment(r: &mut Reader<'_>) -> Result<(Digest, Vec<u8>, MerkleProof), WireError> {
    let root = r.digest()?;
    let leaf_index = r.u64()? as usize;
    let fragment = r.bytes()?;
    let count = r.u32()? as usize;
    if count > 64 {
        return Err(WireError::Invalid("branch length"));
    }
    let branch = (0..count).map(|_| r.digest()).collect::<Result<_, _>>()?;
    Ok((root, fragment, MerkleProof { root, leaf_index, branch }))
}

impl BaMsg {
    pub fn kind(&self) -> &'static str {
        match self {
            BaMsg::Bval { .. } => "bval",
            BaMsg::Aux { .. } => "aux",
            BaMsg::CoinShare { .. } => "coin",
        }
    }

    pub fn round(&self) -> u32 {
        match self {
            BaMsg::Bval { round, .. } | BaMsg::Aux { round, .. } | BaMsg::CoinShare { round, .. } => *round,
        }
    }

    fn wire_len(&self) -> usize {
        1 + 4 + match self {
            BaMsg::Bval { .. } | BaMsg::Aux { .. } => 8,
            BaMsg::CoinShare { .. } => SHARE_WIRE,
        }
    }

    fn encode_into(&self, w: &mut Writer) {
        match self {
            BaMsg::Bval { round, value } => w.u8(1).u32(*round).u64(*value),
            BaMsg::Aux { round, value } => w.u8(2).u32(*round).u64(*value),
            BaMsg::CoinShare { round, share } => w.u8(3).u32(*round).share(share),
        };
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let tag = r.u8()?;
        let round = r.u32()?;
        Ok(match tag {
            1 => BaMsg::Bval { round, value: r.u64()? },
            2 => BaMsg::Aux { round, value: r.u64()? },
            3 => BaMsg::CoinShare { round, share: r.share()? },
            t => return Err(WireError::UnknownTag(t)),
        })
    }
}

fn encode_opt_proof(w: &mut Writer, p: &Option<QuorumProof>) {
    match p {
        None => {
            w.u8(0);
        }
        Some(q) => {
            w.u8(1);
            q.encode_into(w);
        }
    }
}

fn decode_opt_proof(r: &mut Reader<'_>) -> Result<Option<QuorumProof>, WireError> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(QuorumProof::decode(r)?)),
        t => Err(WireError::UnknownTag(t)),
    }
}

impl Message {
    pub fn epoch(&self) -> Epoch {
        match self {
            Message::Proposal { epoch, .. }
            | Message::Vote { epoch, .. }
            | Message::Prbc { epoch, .. }
            | Message::PaceSync { epoch, .. }
            | Message::Tcv { epoch, .. }
            | Message::Acs { epoch, .. }
            | Message::Dec { epoch, .. }
            | Message::CallHelp { epoch, .. }
            | Message::Help { epoch, .. }
            | Message::Blackbox { epoch, .. } => *epoch,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Proposal { .. } => "proposal",
            Message::Vote { .. } => "vote",
            Message::Prbc { msg, .. } => msg.kind(),
            Message::PaceSync { .. } => "pacesync",
            Message::Tcv { msg, .. } => msg.kind(),
            Message::Acs { msg: AcsSub::Rbc(m), .. } => match m {
                PrbcMsg::Val { .. } => "acs-val",
                PrbcMsg::Echo { .. } => "acs-echo",
                PrbcMsg::Ready { .. } => "acs-ready",
                PrbcMsg::Done { .. } => "acs-done",
            },
            Message::Acs { msg: AcsSub::Aba(m), .. } => match m {
                BaMsg::Bval { .. } => "acs-bval",
                BaMsg::Aux { .. } => "acs-aux",
                BaMsg::CoinShare { .. } => "acs-coin",
            },
            Message::Dec { .. } => "dec",
            Message::CallHelp { .. } => "callhelp",
            Message::Help { .. } => "help",
            Message::Blackbox { msg: BlackboxMsg::Value(_), .. } => "value",
            Message::Blackbox { msg: BlackboxMsg::Aba(m), .. } => m.kind(),
        }
    }

    pub fn instance(&self) -> Instance {
        let epoch = self.epoch();
        let (protocol, sub) = match self {
            Message::Proposal { slot, .. } | Message::Vote { slot, .. } => ("hs", *slot),
            Message::Prbc { slot, .. } => ("rbc", *slot),
            Message::PaceSync { .. } => ("pace", 0),
            Message::Tcv { msg, .. } => ("tcv", msg.round() as u64),
            Message::Acs { index, proposer, msg, .. } => {
                let p = if matches!(msg, AcsSub::Rbc(_)) { "acs-rbc" } else { "acs-aba" };
                (p, (*index << 32) | *proposer as u64)
            }
            Message::Dec { index, proposer, .. } => ("dec", (*index << 32) | *proposer as u64),
            Message::CallHelp { tip, .. } | Message::Help { tip, .. } => ("help", *tip),
            Message::Blackbox { .. } => ("blackbox", 0),
        };
        Instance { epoch, protocol, sub }
    }

    /// Exact length of [`Message::encode`].
    pub fn wire_len(&self) -> usize {
        1 + 8
            + match self {
                Message::Proposal { txs, prev, .. } => 8 + txs_wire_len(txs) + proof_len(prev),
                Message::Vote { .. } => 8 + SHARE_WIRE,
                Message::Prbc { msg, .. } => 8 + msg.wire_len(),
                Message::PaceSync { proof, .. } => 8 + proof_len(proof),
                Message::Tcv { msg, .. } => msg.wire_len(),
                Message::Acs { msg, .. } => {
                    8 + 8 + 1
                        + match msg {
                            AcsSub::Rbc(m) => m.wire_len(),
                            AcsSub::Aba(m) => m.wire_len(),
                        }
                }
                Message::Dec { .. } => 8 + 8 + DEC_SHARE_WIRE,
                Message::CallHelp { .. } => 16,
                Message::Help { fragment, proof, .. } => 16 + fragment_len(fragment, proof),
                Message::Blackbox { msg, .. } => {
                    1 + match msg {
                        BlackboxMsg::Value(_) => 8,
                        BlackboxMsg::Aba(m) => m.wire_len(),
                    }
                }
            }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Message::Proposal { epoch, slot, txs, prev } => {
                w.u8(1).u64(*epoch).u64(*slot);
                encode_txs_into(txs, &mut w);
                encode_opt_proof(&mut w, prev);
            }
            Message::Vote { epoch, slot, share } => {
                w.u8(2).u64(*epoch).u64(*slot).share(share);
            }
            Message::Prbc { epoch, slot, msg } => {
                w.u8(3).u64(*epoch).u64(*slot);
                msg.encode_into(&mut w);
            }
            Message::PaceSync { epoch, slot, proof } => {
                w.u8(4).u64(*epoch).u64(*slot);
                encode_opt_proof(&mut w, proof);
            }
            Message::Tcv { epoch, msg } => {
                w.u8(5).u64(*epoch);
                msg.encode_into(&mut w);
            }
            Message::Acs { epoch, index, proposer, msg } => {
                w.u8(6).u64(*epoch).u64(*index).u64(*proposer as u64);
                match msg {
                    AcsSub::Rbc(m) => {
                        w.u8(1);
                        m.encode_into(&mut w);
                    }
                    AcsSub::Aba(m) => {
                        w.u8(2);
                        m.encode_into(&mut w);
                    }
                }
            }
            Message::Dec { epoch, index, proposer, share } => {
                w.u8(7).u64(*epoch).u64(*index).u64(*proposer as u64);
                w.u64(share.party as u64).raw(&share.point).raw(&share.challenge).raw(&share.response);
            }
            Message::CallHelp { epoch, tip, gap } => {
                w.u8(8).u64(*epoch).u64(*tip).u64(*gap);
            }
            Message::Help { epoch, tip, gap, root, fragment, proof } => {
                w.u8(9).u64(*epoch).u64(*tip).u64(*gap);
                encode_fragment(&mut w, root, fragment, proof);
            }
            Message::Blackbox { epoch, msg } => {
                w.u8(10).u64(*epoch);
                match msg {
                    BlackboxMsg::Value(v) => {
                        w.u8(1).u64(*v);
                    }
                    BlackboxMsg::Aba(m) => {
                        w.u8(2);
                        m.encode_into(&mut w);
                    }
                }
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
        let mut r = Reader::new(bytes);
        let tag = r.u8()?;
        let epoch = r.u64()?;
        let msg = match tag {
            1 => {
                let slot = r.u64()?;
                let txs = decode_txs(&mut r)?;
                Message::Proposal { epoch, slot, txs, prev: decode_opt_proof(&mut r)? }
            }
            2 => Message::Vote { epoch, slot: r.u64()?, share: r.share()? },
            3 => Message::Prbc { epoch, slot: r.u64()?, msg: PrbcMsg::decode(&mut r)? },
            4 => {
                let slot = r.u64()?;
                Message::PaceSync { epoch, slot, proof: decode_opt_proof(&mut r)? }
            }
            5 => Message::Tcv { epoch, msg: BaMsg::decode(&mut r)? },
            6 => {
                let index = r.u64()?;
                let proposer = r.u64()? as usize;
                let msg = match r.u8()? {
                    1 => AcsSub::Rbc(PrbcMsg::decode(&mut r)?),
                    2 => AcsSub::Aba(BaMsg::decode(&mut r)?),
                    t => return Err(WireError::UnknownTag(t)),
                };
                Message::Acs { epoch, index, proposer, msg }
            }
            7 => {
                let index = r.u64()?;
                let proposer = r.u64()? as usize;
                let share = DecShare {
                    party: r.u64()? as usize,
                    point: r.array()?,
                    challenge: r.array()?,
                    response: r.array()?,
                };
                Message::Dec { epoch, index, proposer, share }
            }
            8 => Message::CallHelp { epoch, tip: r.u64()?, gap: r.u64()? },
            9 => {
                let tip = r.u64()?;
                let gap = r.u64()?;
                let (root, fragment, proof) = decode_fragment(&mut r)?;
                Message::Help { epoch, tip, gap, root, fragment, proof }
            }
            10 => {
                let msg = match r.u8()? {
                    1 => BlackboxMsg::Value(r.u64()?),
                    2 => BlackboxMsg::Aba(BaMsg::decode(&mut r)?),
                    t => return Err(WireError::UnknownTag(t)),
                };
                Message::Blackbox { epoch, msg }
            }
            t => return Err(WireError::UnknownTag(t)),
        };
        r.finish()?;
        Ok(msg)
    }
}

impl fmt::Debug for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Proposal { epoch, slot, txs, prev } => {
                write!(f, "Proposal(e{epoch} s{slot} {} txs, prev={})", txs.len(), prev.is_some())
            }
            Message::Vote { epoch, slot, share } => write!(f, "Vote(e{epoch} s{slot} P{})", share.signer),
            Message::Prbc { epoch, slot, msg } => write!(f, "Prbc(e{epoch} s{slot} {msg:?})"),
            Message::PaceSync { epoch, slot, proof } => {
                write!(f, "PaceSync(e{epoch} p{slot} proof={})", proof.is_some())
            }
            Message::Tcv { epoch, msg } => write!(f, "Tcv(e{epoch} {msg:?})"),
            Message::Acs { epoch, index, proposer, msg } => write!(f, "Acs(e{epoch}.{index} P{proposer} {msg:?})"),
            Message::Dec { epoch, index, proposer, share } => {
                write!(f, "Dec(e{epoch}.{index} P{proposer} from P{})", share.party)
            }
            Message::CallHelp { epoch, tip, gap } => write!(f, "CallHelp(e{epoch} tip={tip} gap={gap})"),
            Message::Help { epoch, tip, gap, proof, .. } => {
                write!(f, "Help(e{epoch} tip={tip} gap={gap} #{})", proof.leaf_index)
            }
            Message::Blackbox { epoch, msg } => write!(f, "Blackbox(e{epoch} {msg:?})"),
        }
    }
}
