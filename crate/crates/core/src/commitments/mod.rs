//! Hash commitments and Merkle-tree commitments.
//!
//! `Commit(pp; m) = H(0x03 ∥ r ∥ m)` with 32 bytes of fresh randomness `r`.
//! Merkle leaves are `H(0x00 ∥ i as u64 BE ∥ m_i)`, inner nodes
//! `H(0x01 ∥ left ∥ right)`. Trees are padded to a power of two (at least two
//! leaves) with the constant digest `H(0x02)`.

mod digest;
mod merkle;
mod record;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use digest::{hash_parts, Digest, DIGEST_LEN};
pub use merkle::{leaf_hash, mt_commit, mt_open, mt_verify, node_hash, pad_leaf, MerklePath, MerkleTree, Side};
pub use record::{Record, RecordTag};

pub const LEAF_TAG: u8 = 0x00;
pub const NODE_TAG: u8 = 0x01;
pub const PAD_TAG: u8 = 0x02;
pub const COMMIT_TAG: u8 = 0x03;
pub const RANDOMNESS_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommitError {
    #[error("unsupported security level {0}")]
    UnsupportedLevel(u32),
    #[error("cannot commit to an empty leaf list")]
    EmptyInput,
    #[error("leaf index {index} out of range for {len} leaves")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("malformed record: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HashAlgorithm {
    Sha256,
}

/// Public parameters `pp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitParams {
    pub hash: HashAlgorithm,
    pub security_level: u32,
    pub randomness_len: usize,
}

impl Default for CommitParams {
    fn default() -> Self {
        setup_com(128).expect("128-bit level is supported")
    }
}

pub fn setup_com(security_level: u32) -> Result<CommitParams, CommitError> {
    match security_level {
        128 | 256 => Ok(CommitParams {
            hash: HashAlgorithm::Sha256,
            security_level,
            randomness_len: RANDOMNESS_LEN,
        }),
        other => Err(CommitError::UnsupportedLevel(other)),
    }
}

#[derive(Clone, Copy, Default, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Commitment(pub Digest);

/// Opening randomness `r`.
#[derive(Clone, Copy, Default, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Randomness(pub Digest);

impl Randomness {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut r = [0u8; RANDOMNESS_LEN];
        rng.fill_bytes(&mut r);
        Self(Digest(r))
    }
}

fn commitment_digest(r: &Randomness, m: &[u8]) -> Commitment {
    let mut h = Sha256::new();
    h.update([COMMIT_TAG]);
    h.update(r.0.as_bytes());
    h.update(m);
    Commitment(Digest(h.finalize().into()))
}

pub fn commit<R: RngCore + ?Sized>(_pp: &CommitParams, m: &[u8], rng: &mut R) -> (Commitment, Randomness) {
    let r = Randomness::random(rng);
    (commitment_digest(&r, m), r)
}

/// Commitment with caller-chosen randomness.
pub fn commit_with(_pp: &CommitParams, m: &[u8], r: &Randomness) -> Commitment {
    commitment_digest(r, m)
}

pub fn open(_pp: &CommitParams, com: &Commitment, m: &[u8], r: &Randomness) -> bool {
    commitment_digest(r, m) == *com
}
