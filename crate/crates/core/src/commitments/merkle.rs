use serde::{Deserialize, Serialize};

use super::{hash_parts, CommitError, CommitParams, Digest, LEAF_TAG, NODE_TAG, PAD_TAG};

pub fn leaf_hash(index: usize, m: &[u8]) -> Digest {
    hash_parts(&[&[LEAF_TAG], &(index as u64).to_be_bytes(), m])
}

pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    hash_parts(&[&[NODE_TAG], left.as_bytes(), right.as_bytes()])
}

/// Digest occupying padding positions.
pub fn pad_leaf() -> Digest {
    hash_parts(&[&[PAD_TAG]])
}

/// Which side of the parent the sibling sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MerklePath {
    pub index: usize,
    /// Siblings from the leaf level upwards.
    pub siblings: Vec<(Digest, Side)>,
}

/// Full tree state kept by the committer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerkleTree {
    len: usize,
    /// `levels[0]` holds the padded leaf hashes, the last level the root.
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    pub fn root(&self) -> Digest {
        self.levels.last().unwrap()[0]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn leaf(&self, index: usize) -> Option<Digest> {
        (index < self.len).then(|| self.levels[0][index])
    }
}

pub fn mt_commit<L: AsRef<[u8]>>(_pp: &CommitParams, leaves: &[L]) -> Result<(Digest, MerkleTree), CommitError> {
    if leaves.is_empty() {
        return Err(CommitError::EmptyInput);
    }
    let width = leaves.len().next_power_of_two().max(2);
    let mut level: Vec<Digest> = leaves
        .iter()
        .enumerate()
        .map(|(i, m)| leaf_hash(i, m.as_ref()))
        .collect();
    level.resize(width, pad_leaf());
    let mut levels = vec![level];
    while levels.last().unwrap().len() > 1 {
        let next = levels
            .last()
            .unwrap()
            .chunks_exact(2)
            .map(|pair| node_hash(&pair[0], &pair[1]))
            .collect();
        levels.push(next);
    }
    let tree = MerkleTree {
        len: leaves.len(),
        levels,
    };
    Ok((tree.root(), tree))
}

pub fn mt_open(_pp: &CommitParams, tree: &MerkleTree, index: usize) -> Result<MerklePath, CommitError> {
    if index >= tree.len {
        return Err(CommitError::IndexOutOfRange { index, len: tree.len });
    }
    let mut pos = index;
    let siblings = tree.levels[..tree.depth()]
        .iter()
        .map(|level| {
            let sib = if pos.is_multiple_of(2) {
                (level[pos + 1], Side::Right)
            } else {
                (level[pos - 1], Side::Left)
            };
            pos /= 2;
            sib
        })
        .collect();
    Ok(MerklePath { index, siblings })
}

/// Accepts iff `leaf` sits at position `index` under `root`.
pub fn mt_verify(_pp: &CommitParams, root: &Digest, index: usize, leaf: &[u8], path: &MerklePath) -> bool {
    if path.index != index || path.siblings.is_empty() || path.siblings.len() >= usize::BITS as usize {
        return false;
    }
    if index >> path.siblings.len() != 0 {
        return false;
    }
    let mut acc = leaf_hash(index, leaf);
    for (level, (sib, side)) in path.siblings.iter().enumerate() {
        let expected = if (index >> level) & 1 == 0 {
            Side::Right
        } else {
            Side::Left
        };
        if *side != expected {
            return false;
        }
        acc = match side {
            Side::Right => node_hash(&acc, sib),
            Side::Left => node_hash(sib, &acc),
        };
    }
    acc == *root
}
