//! Body of the secure scoring functionality as executed by the dealer.

use serde::{Deserialize, Serialize};

use super::{score_components, ScoreError, ScoreReport, ScoringConfig};
use crate::commitments::{open, CommitParams, Commitment, Randomness};
use crate::numerics::FixedTensor;
use crate::selection::RepresentativeSet;

/// Model owner's inputs: predictions `y'_i` for `i ∈ I_R` with their
/// randomness, and the label and feature commitments received at Stage 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubScoreP1 {
    pub predictions: Vec<FixedTensor>,
    pub prediction_randomness: Vec<Randomness>,
    /// `com_{y_i}` for `i ∈ I_R`, in `I_R` order.
    pub label_commitments: Vec<Commitment>,
    /// `com_{x_i}` for the whole dataset.
    pub feature_commitments: Vec<Commitment>,
}

/// Data owner's inputs: the full feature set, representative labels, all
/// randomness, and the prediction commitments received at Stage 2.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubScoreP2 {
    pub features: Vec<FixedTensor>,
    pub feature_randomness: Vec<Randomness>,
    pub labels: Vec<FixedTensor>,
    pub label_randomness: Vec<Randomness>,
    pub prediction_commitments: Vec<Commitment>,
}

fn check_all(
    pp: &CommitParams,
    what: &str,
    coms: &[Commitment],
    values: &[FixedTensor],
    rs: &[Randomness],
) -> Result<(), ScoreError> {
    if coms.len() != values.len() || rs.len() != values.len() {
        return Err(ScoreError::Abort(format!(
            "{what}: {} commitments, {} values, {} randomness",
            coms.len(),
            values.len(),
            rs.len()
        )));
    }
    for (i, ((c, v), r)) in coms.iter().zip(values).zip(rs).enumerate() {
        if !open(pp, c, &v.to_bytes(), r) {
            return Err(ScoreError::Abort(format!("{what} {i} fails its commitment")));
        }
    }
    Ok(())
}

/// Opens every commitment, aborting on the first failure, then scores.
pub fn f_subscore(
    pp: &CommitParams,
    config: &ScoringConfig,
    rep: &RepresentativeSet,
    p1: &SubScoreP1,
    p2: &SubScoreP2,
) -> Result<ScoreReport, ScoreError> {
    if rep.indices.iter().any(|&i| i >= p2.features.len()) {
        return Err(ScoreError::Abort("representative index out of range".into()));
    }
    check_all(
        pp,
        "prediction",
        &p2.prediction_commitments,
        &p1.predictions,
        &p1.prediction_randomness,
    )?;
    check_all(pp, "label", &p1.label_commitments, &p2.labels, &p2.label_randomness)?;
    check_all(
        pp,
        "feature",
        &p1.feature_commitments,
        &p2.features,
        &p2.feature_randomness,
    )?;
    score_components(&p1.predictions, &p2.labels, &p2.features, rep, config)
        .map_err(|e| ScoreError::Abort(format!("scoring failed: {e}")))
}
