//! Optimistic asynchronous atomic broadcast (fastlane, pace sync, fallback), run
//! inside a deterministic adversarial network simulator.

pub mod acs;
pub mod bolt;
pub mod config;
pub mod crypto;
pub mod message;
pub mod scenario;
pub mod metrics;
pub mod monitor;
pub mod node;
pub mod sim;
pub mod tcv;
pub mod types;
pub mod wire;

/// 0-based party index.
pub type PartyId = usize;
pub type Epoch = u64;
pub type Slot = u64;

pub use crypto::{deal, CryptoError, Digest, PartyKeys};
pub use message::{Instance, Message};
pub use types::{Block, QuorumProof, Tx};
