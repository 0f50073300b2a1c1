//! Notarizable weak atomic broadcast fastlanes.

pub mod hs;
pub mod prbc;
pub mod rbc;

use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, PublicKeys};
use crate::types::QuorumProof;
use crate::{Epoch, Slot};

pub use hs::HsInstance;
pub use prbc::{Prbc, PrbcOutput};
pub use rbc::RbcLane;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FastlaneKind {
    /// Stable-leader pipelined multicast.
    Hs,
    /// Sequential provable reliable broadcasts.
    Rbc,
    /// No fastlane at all: every epoch waits for its timer.
    Timeout,
}

impl std::str::FromStr for FastlaneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hs" => Ok(FastlaneKind::Hs),
            "rbc" => Ok(FastlaneKind::Rbc),
            "timeout" => Ok(FastlaneKind::Timeout),
            other => Err(format!("unknown fastlane {other:?} (expected hs, rbc or timeout)")),
        }
    }
}

impl std::fmt::Display for FastlaneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FastlaneKind::Hs => "hs",
            FastlaneKind::Rbc => "rbc",
            FastlaneKind::Timeout => "timeout",
        })
    }
}

/// Bytes signed by an HS vote.
pub fn hs_vote_message(epoch: Epoch, slot: Slot, digest: &Digest) -> Vec<u8> {
    let mut m = Vec::with_capacity(12 + 16 + 32);
    m.extend_from_slice(b"bdt/hs-vote");
    m.extend_from_slice(&epoch.to_be_bytes());
    m.extend_from_slice(&slot.to_be_bytes());
    m.extend_from_slice(digest.as_bytes());
    m
}

/// Bytes signed by a PRBC completion share: the instance id only.
pub fn prbc_done_message(epoch: Epoch, slot: Slot) -> Vec<u8> {
    let mut m = Vec::with_capacity(14 + 16);
    m.extend_from_slice(b"bdt/prbc-done");
    m.extend_from_slice(&epoch.to_be_bytes());
    m.extend_from_slice(&slot.to_be_bytes());
    m
}

/// Stateless proof check for one fastlane slot. Quorum is `2f + 1`.
pub fn bolt_verify(kind: FastlaneKind, public: &PublicKeys, f: usize, epoch: Epoch, slot: Slot, proof: &QuorumProof) -> bool {
    let t = 2 * f + 1;
    match kind {
        FastlaneKind::Hs => public.verify(t, &hs_vote_message(epoch, slot, &proof.digest), &proof.sig),
        FastlaneKind::Rbc => public.verify(t, &prbc_done_message(epoch, slot), &proof.sig),
        FastlaneKind::Timeout => false,
    }
}

/// A PaceSync claim is valid with a verifying proof, or as `(0, None)`.
pub fn pacesync_valid(kind: FastlaneKind, public: &PublicKeys, f: usize, epoch: Epoch, slot: Slot, proof: Option<&QuorumProof>) -> bool {
    match (slot, proof) {
        (0, None) => true,
        (0, Some(_)) | (_, None) => false,
        (s, Some(p)) => bolt_verify(kind, public, f, epoch, s, p),
    }
}
