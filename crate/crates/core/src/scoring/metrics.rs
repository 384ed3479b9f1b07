use rayon::prelude::*;

use super::{ScoreError, ScoreWeights};
use crate::numerics::{fx_ln, fx_softmax, isqrt_u128, mean, sqrt_q32, squared_distance, FixedScalar, FixedTensor};
use crate::selection::{nearest_sq_distances, RepresentativeSet};

/// Softmax of a logit tensor of any shape, flattened.
pub fn probabilities(logits: &FixedTensor) -> Result<FixedTensor, ScoreError> {
    Ok(fx_softmax(&logits.clone().flatten())?)
}

/// `−Σ y^i ln y'^i`.
pub fn loss_ce(pred_probs: &FixedTensor, label_onehot: &FixedTensor) -> Result<FixedScalar, ScoreError> {
    if pred_probs.len() != label_onehot.len() {
        return Err(ScoreError::Domain(format!(
            "{} probabilities for a label of length {}",
            pred_probs.len(),
            label_onehot.len()
        )));
    }
    let mut total = FixedScalar::ZERO;
    for (c, (&p, &y)) in pred_probs.data().iter().zip(label_onehot.data()).enumerate() {
        if y == FixedScalar::ZERO {
            continue;
        }
        if p.raw() <= 0 {
            return Err(ScoreError::Domain(format!("zero probability at labelled class {c}")));
        }
        total = total.checked_sub(y.checked_mul(fx_ln(p)?)?)?;
    }
    Ok(total)
}

/// `(1/k) Σ ℓ_CE(y'_i, y_i)`.
pub fn mean_loss(pred_probs: &[FixedTensor], labels: &[FixedTensor]) -> Result<FixedScalar, ScoreError> {
    if pred_probs.len() != labels.len() {
        return Err(ScoreError::Domain("prediction and label counts differ".into()));
    }
    let losses = pred_probs
        .iter()
        .zip(labels)
        .map(|(p, y)| loss_ce(p, y))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean(&losses)?)
}

fn entropy(row: &FixedTensor) -> Result<FixedScalar, ScoreError> {
    let mut acc = FixedScalar::ZERO;
    for &p in row.data() {
        if p.is_negative() {
            return Err(ScoreError::Domain(format!("negative probability {p}")));
        }
        if p.raw() > 0 {
            acc = acc.checked_sub(p.checked_mul(fx_ln(p)?)?)?;
        }
    }
    Ok(acc)
}

/// Mean Shannon entropy (natural log) of the rows.
pub fn uncertainty_entropy(pred_probs: &[FixedTensor]) -> Result<FixedScalar, ScoreError> {
    let h = pred_probs.iter().map(entropy).collect::<Result<Vec<_>, _>>()?;
    Ok(mean(&h)?)
}

/// Mean gap between the two largest entries of each row.
pub fn uncertainty_margin(pred_probs: &[FixedTensor]) -> Result<FixedScalar, ScoreError> {
    let gaps = pred_probs
        .iter()
        .map(|row| {
            if row.len() < 2 {
                return Err(ScoreError::RowTooShort(row.len()));
            }
            let mut sorted: Vec<FixedScalar> = row.data().to_vec();
            sorted.sort_unstable_by(|a, b| b.cmp(a));
            Ok(sorted[0].checked_sub(sorted[1])?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean(&gaps)?)
}

/// `max_{a ∈ D_B ∖ D_R} min_{b ∈ D_R} ‖a − b‖`, floored.
pub fn diversity_maxmin(parent: &[FixedTensor], rep: &RepresentativeSet) -> Result<FixedScalar, ScoreError> {
    let dists = nearest_sq_distances(parent, rep);
    let outside = rep.complement(parent.len());
    let worst = outside
        .iter()
        .map(|&i| dists[i])
        .max()
        .ok_or(ScoreError::EmptyComplement)?;
    Ok(sqrt_q32(worst)?)
}

/// Mean of `‖x − x'‖` over unordered pairs of the representatives; each
/// distance is floored before averaging.
pub fn diversity_meanpairwise(rep_features: &[FixedTensor]) -> Result<FixedScalar, ScoreError> {
    let k = rep_features.len();
    if k < 2 {
        return Err(ScoreError::TooFewPoints(k));
    }
    let dists = (0..k)
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..k).map(move |j| sqrt_q32(squared_distance(rep_features[i].data(), rep_features[j].data())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean(&dists)?)
}

/// Average over features of the population standard deviation across the
/// representatives.
pub fn diversity_feature_std(rep_features: &[FixedTensor]) -> Result<FixedScalar, ScoreError> {
    let k = rep_features.len();
    let width = rep_features
        .first()
        .map(FixedTensor::len)
        .ok_or(ScoreError::TooFewPoints(0))?;
    if rep_features.iter().any(|x| x.len() != width) {
        return Err(ScoreError::Domain("features differ in length".into()));
    }
    let stds = (0..width)
        .map(|f| {
            let sum: i64 = rep_features.iter().map(|x| x.data()[f].raw() as i64).sum();
            let mu = sum.div_euclid(k as i64);
            let sq: u128 = rep_features
                .iter()
                .map(|x| {
                    let dev = (x.data()[f].raw() as i64 - mu).unsigned_abs() as u128;
                    dev * dev
                })
                .sum();
            i32::try_from(isqrt_u128(sq / k as u128)).map(FixedScalar::from_raw)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| ScoreError::Numeric(crate::numerics::NumericError::Overflow))?;
    Ok(mean(&stds)?)
}

/// `α1·l + α2·u + α3·d`.
pub fn aggregate(l: FixedScalar, u: FixedScalar, d: FixedScalar, w: &ScoreWeights) -> Result<FixedScalar, ScoreError> {
    Ok(w.alpha1
        .checked_mul(l)?
        .checked_add(w.alpha2.checked_mul(u)?)?
        .checked_add(w.alpha3.checked_mul(d)?)?)
}
