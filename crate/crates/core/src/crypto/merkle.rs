//! Binary Merkle trees over erasure-coded fragments.
//!
//! Leaves are hashed as `H(0x00 || leaf)` and internal nodes as
//! `H(0x01 || left || right)`. The leaf layer is padded to the next power of
//! two by repeating the last leaf digest.

use serde::{Deserialize, Serialize};

use super::hash::{hash_parts, Digest};
use super::CryptoError;

const LEAF_TAG: &[u8] = &[0x00];
const NODE_TAG: &[u8] = &[0x01];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub root: Digest,
    pub leaf_index: usize,
    /// Sibling digests from the leaf level up to the child of the root.
    pub branch: Vec<Digest>,
}

pub fn leaf_digest(leaf: &[u8]) -> Digest {
    hash_parts(&[LEAF_TAG, leaf])
}

fn node_digest(left: &Digest, right: &Digest) -> Digest {
    hash_parts(&[NODE_TAG, left.as_bytes(), right.as_bytes()])
}

/// Depth of a tree with `leaves` leaves after padding.
pub fn depth_for(leaves: usize) -> usize {
    leaves.max(1).next_power_of_two().trailing_zeros() as usize
}

/// Builds the tree and returns the root plus one proof per original leaf.
pub fn merkle_build<L: AsRef<[u8]>>(leaves: &[L]) -> Result<(Digest, Vec<MerkleProof>), CryptoError> {
    if leaves.is_empty() {
        return Err(CryptoError::EmptyTree);
    }
    let width = leaves.len().next_power_of_two();
    let mut level: Vec<Digest> = leaves.iter().map(|l| leaf_digest(l.as_ref())).collect();
    let last = *level.last().expect("nonempty");
    level.resize(width, last);

    let mut levels = vec![level];
    while levels.last().map_or(0, Vec::len) > 1 {
        let prev = levels.last().expect("nonempty");
        let next = prev.chunks(2).map(|pair| node_digest(&pair[0], &pair[1])).collect();
        levels.push(next);
    }
    let root = levels.last().expect("nonempty")[0];

    let proofs = (0..leaves.len())
        .map(|leaf_index| {
            let mut idx = leaf_index;
            let branch = levels[..levels.len() - 1]
                .iter()
                .map(|level| {
                    let sibling = level[idx ^ 1];
                    idx >>= 1;
                    sibling
                })
                .collect();
            MerkleProof { root, leaf_index, branch }
        })
        .collect();
    Ok((root, proofs))
}

/// Recomputes the root from `leaf` and the sibling path.
pub fn merkle_verify(root: &Digest, leaf: &[u8], proof: &MerkleProof) -> bool {
    if proof.branch.len() >= usize::BITS as usize || proof.leaf_index >> proof.branch.len() != 0 {
        return false;
    }
    let mut acc = leaf_digest(leaf);
    let mut idx = proof.leaf_index;
    for sibling in &proof.branch {
        acc = if idx & 1 == 0 {
            node_digest(&acc, sibling)
        } else {
            node_digest(sibling, &acc)
        };
        idx >>= 1;
    }
    acc == *root && proof.root == *root
}

/// Like [`merkle_verify`], but also pins the leaf index and the tree width,
/// which callers know from the protocol context.
pub fn merkle_verify_at(root: &Digest, leaf: &[u8], proof: &MerkleProof, index: usize, width: usize) -> bool {
    proof.leaf_index == index && proof.branch.len() == depth_for(width) && merkle_verify(root, leaf, proof)
}

#[cfg(test)]
mod tests {
    use super::super::hash::hash;
    use super::*;

    fn cat(parts: &[&[u8]]) -> Vec<u8> {
        parts.concat()
    }

    #[test]
    fn single_leaf_root_is_leaf_digest() {
        let (root, proofs) = merkle_build(&[b"L"]).unwrap();
        assert_eq!(root, hash(&cat(&[&[0u8], b"L"])));
        assert!(proofs[0].branch.is_empty());
        assert!(merkle_verify(&root, b"L", &proofs[0]));
    }

    #[test]
    fn three_leaves_by_hand() {
        let leaves: [&[u8]; 3] = [b"a", b"b", b"c"];
        let (root, proofs) = merkle_build(&leaves).unwrap();
        // Hand-computed: pad with a copy of the third leaf digest.
        let la = hash(&cat(&[&[0], b"a"]));
        let lb = hash(&cat(&[&[0], b"b"]));
        let lc = hash(&cat(&[&[0], b"c"]));
        let n01 = hash(&cat(&[&[1], la.as_bytes(), lb.as_bytes()]));
        let n23 = hash(&cat(&[&[1], lc.as_bytes(), lc.as_bytes()]));
        let expect = hash(&cat(&[&[1], n01.as_bytes(), n23.as_bytes()]));
        assert_eq!(root, expect);
        assert_eq!(proofs[2].branch, vec![lc, n01]);
        assert_eq!(proofs[2].branch.len(), 2);
        for (i, leaf) in leaves.iter().enumerate() {
            assert!(merkle_verify(&root, leaf, &proofs[i]));
        }
    }

    #[test]
    fn identical_leaves_all_verify() {
        let leaves = vec![b"same".to_vec(); 4];
        let (root, proofs) = merkle_build(&leaves).unwrap();
        assert!(proofs.iter().all(|p| merkle_verify(&root, b"same", p)));
    }

    #[test]
    fn empty_tree_rejected() {
        let leaves: Vec<Vec<u8>> = vec![];
        assert_eq!(merkle_build(&leaves).unwrap_err(), CryptoError::EmptyTree);
    }

    #[test]
    fn mutations_fail() {
        let leaves: Vec<Vec<u8>> = (0..5u8).map(|i| vec![i; 3]).collect();
        let (root, proofs) = merkle_build(&leaves).unwrap();
        let mut bad_leaf = leaves[1].clone();
        bad_leaf[0] ^= 1;
        assert!(!merkle_verify(&root, &bad_leaf, &proofs[1]));

        let mut short = proofs[1].clone();
        short.branch.pop();
        assert!(!merkle_verify(&root, &leaves[1], &short));
        let mut long = proofs[1].clone();
        long.branch.push(root);
        assert!(!merkle_verify(&root, &leaves[1], &long));
        assert!(!merkle_verify_at(&root, &leaves[1], &proofs[1], 2, 5));
        assert!(merkle_verify_at(&root, &leaves[1], &proofs[1], 1, 5));
    }
}
