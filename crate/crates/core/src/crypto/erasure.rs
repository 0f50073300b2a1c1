//! Systematic (k, n) MDS erasure coding over GF(2^8).
//!
//! The payload is prefixed with its length as a 4-byte big-endian integer and
//! zero-padded to a multiple of `k`, so decoding recovers the exact bytes.

use reed_solomon_erasure::galois_8::ReedSolomon;

use super::CryptoError;

/// Maximum number of fragments supported by the GF(2^8) code.
pub const MAX_FRAGMENTS: usize = 256;

fn check_params(k: usize, n: usize) -> Result<(), CryptoError> {
    if k == 0 || k > n || n > MAX_FRAGMENTS {
        return Err(CryptoError::BadParams(format!("erasure code needs 1 <= k <= n <= 256, got k={k} n={n}")));
    }
    Ok(())
}

/// Splits `data` into `n` fragments, any `k` of which reconstruct it.
pub fn erasure_encode(k: usize, n: usize, data: &[u8]) -> Result<Vec<Vec<u8>>, CryptoError> {
    check_params(k, n)?;
    let len = u32::try_from(data.len()).map_err(|_| CryptoError::BadParams("payload exceeds 4 GiB".into()))?;
    let framed = data.len() + 4;
    let shard_len = framed.div_ceil(k).max(1);
    let mut padded = Vec::with_capacity(shard_len * k);
    padded.extend_from_slice(&len.to_be_bytes());
    padded.extend_from_slice(data);
    padded.resize(shard_len * k, 0);

    let mut shards: Vec<Vec<u8>> = padded.chunks(shard_len).map(<[u8]>::to_vec).collect();
    if n > k {
        shards.resize(n, vec![0; shard_len]);
        let rs = ReedSolomon::new(k, n - k).map_err(|e| CryptoError::BadParams(e.to_string()))?;
        rs.encode(&mut shards).map_err(|e| CryptoError::BadParams(e.to_string()))?;
    }
    Ok(shards)
}

/// Reconstructs the payload from at least `k` fragments with distinct indices.
///
/// Fragments are trusted; integrity is the caller's job (Merkle branches).
pub fn erasure_decode(k: usize, n: usize, fragments: &[(usize, Vec<u8>)]) -> Result<Vec<u8>, CryptoError> {
    check_params(k, n)?;
    let mut slots: Vec<Option<Vec<u8>>> = vec![None; n];
    let mut shard_len = None;
    let mut have = 0;
    for (index, frag) in fragments {
        if *index >= n {
            return Err(CryptoError::CorruptFragment(format!("fragment index {index} out of range")));
        }
        if *shard_len.get_or_insert(frag.len()) != frag.len() || frag.is_empty() {
            return Err(CryptoError::CorruptFragment("fragment lengths differ".into()));
        }
        if slots[*index].is_none() {
            slots[*index] = Some(frag.clone());
            have += 1;
        }
    }
    if have < k {
        return Err(CryptoError::InsufficientFragments { need: k, have });
    }
    if n > k && slots[..k].iter().any(Option::is_none) {
        let rs = ReedSolomon::new(k, n - k).map_err(|e| CryptoError::BadParams(e.to_string()))?;
        rs.reconstruct_data(&mut slots)
            .map_err(|e| CryptoError::CorruptFragment(e.to_string()))?;
    }
    let mut padded = Vec::with_capacity(k * shard_len.unwrap_or(0));
    for slot in &slots[..k] {
        padded.extend_from_slice(slot.as_ref().expect("data shards reconstructed"));
    }
    if padded.len() < 4 {
        return Err(CryptoError::CorruptFragment("missing length prefix".into()));
    }
    let len = u32::from_be_bytes(padded[..4].try_into().expect("4 bytes")) as usize;
    if len > padded.len() - 4 {
        return Err(CryptoError::CorruptFragment("length prefix exceeds payload".into()));
    }
    Ok(padded[4..4 + len].to_vec())
}
