//! Rademacher random projection and the coin-flip seed it is drawn from.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::SelectionError;
use crate::commitments::{commit_with, hash_parts, CommitParams, Commitment, Digest, Randomness};
use crate::numerics::{FixedScalar, FixedTensor, NumericError, FRAC_BITS};

/// `m × d` matrix with entries `±1/sqrt(m)`, stored as sign bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Seed the signs were expanded from.
    pub seed: Digest,
    /// Quantized `1/sqrt(m)`.
    pub scale: FixedScalar,
    /// Row-major; `true` is a negative entry.
    negative: Vec<bool>,
}

impl ProjectionMatrix {
    pub fn from_seed(seed: Digest, rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "projection dimensions must be positive");
        let mut rng = ChaCha20Rng::from_seed(seed.0);
        let mut negative = Vec::with_capacity(rows * cols);
        while negative.len() < rows * cols {
            let word = rng.next_u64();
            let take = (rows * cols - negative.len()).min(64);
            negative.extend((0..take).map(|b| (word >> b) & 1 == 1));
        }
        Self {
            rows,
            cols,
            seed,
            scale: FixedScalar::from_f64(1.0 / (rows as f64).sqrt()),
            negative,
        }
    }

    pub fn entry(&self, r: usize, c: usize) -> FixedScalar {
        if self.negative[r * self.cols + c] {
            -self.scale
        } else {
            self.scale
        }
    }

    /// Exact signed sums `Σ_c ±x_c` in raw units, before scaling.
    pub fn project_unscaled(&self, x: &[FixedScalar]) -> Vec<i64> {
        self.negative
            .chunks_exact(self.cols)
            .map(|row| {
                row.iter()
                    .zip(x)
                    .map(|(&neg, v)| if neg { -(v.raw() as i64) } else { v.raw() as i64 })
                    .sum()
            })
            .collect()
    }
}

/// `x' = R x`. Each output is the exact signed sum times the quantized scale,
/// floored once.
pub fn jl_project(r: &ProjectionMatrix, x: &FixedTensor) -> Result<FixedTensor, SelectionError> {
    if x.len() != r.cols {
        return Err(SelectionError::ShapeMismatch {
            expected: vec![r.cols],
            found: x.shape().to_vec(),
        });
    }
    let scale = r.scale.raw() as i128;
    let data = r
        .project_unscaled(x.data())
        .into_iter()
        .map(|s| {
            i32::try_from((s as i128 * scale) >> FRAC_BITS)
                .map(FixedScalar::from_raw)
                .map_err(|_| NumericError::Overflow)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FixedTensor::vector(data))
}

/// A party's contribution to the joint seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinShare {
    pub value: Digest,
    pub randomness: Randomness,
}

impl CoinShare {
    /// Derives the share and its commitment randomness from a party-local seed.
    pub fn derive(party_seed: &[u8]) -> Self {
        Self {
            value: hash_parts(&[b"privade/coin", party_seed]),
            randomness: Randomness(hash_parts(&[b"privade/coin-r", party_seed])),
        }
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut value = [0u8; 32];
        rng.fill_bytes(&mut value);
        Self {
            value: Digest(value),
            randomness: Randomness::random(rng),
        }
    }

    pub fn commitment(&self, pp: &CommitParams) -> Commitment {
        commit_with(pp, self.value.as_bytes(), &self.randomness)
    }
}

/// `seed = H(r_A ∥ r_B)` after checking both revealed shares against their
/// earlier commitments.
pub fn coin_flip_seed(
    pp: &CommitParams,
    (com_a, share_a): (&Commitment, &CoinShare),
    (com_b, share_b): (&Commitment, &CoinShare),
) -> Result<Digest, SelectionError> {
    if share_a.commitment(pp) != *com_a {
        return Err(SelectionError::CommitmentMismatch("party A coin share"));
    }
    if share_b.commitment(pp) != *com_b {
        return Err(SelectionError::CommitmentMismatch("party B coin share"));
    }
    Ok(hash_parts(&[share_a.value.as_bytes(), share_b.value.as_bytes()]))
}
