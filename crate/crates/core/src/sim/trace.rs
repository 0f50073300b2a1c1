use serde::{Deserialize, Serialize};

use crate::PartyId;

/// One network envelope, in the order it was sent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Delivery time.
    pub time: u64,
    pub sent: u64,
    pub round: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub instance: String,
    pub kind: String,
    pub bytes: u64,
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: std::io::Write>(events: &[TraceEvent], mut w: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
