//! Dataset scoring: loss, uncertainty, diversity and their aggregate, the
//! cleartext oracle, and the dealer body of the secure scoring step.

mod metrics;
mod subscore;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{
    aggregate, diversity_feature_std, diversity_maxmin, diversity_meanpairwise, loss_ce, mean_loss, probabilities,
    uncertainty_entropy, uncertainty_margin,
};
pub use subscore::{f_subscore, SubScoreP1, SubScoreP2};

use crate::commitments::Digest;
use crate::model_split::SplitModel;
use crate::numerics::{FixedScalar, FixedTensor, Model, NumericError};
use crate::selection::{jl_project, k_center_greedy, Dataset, ProjectionMatrix, RepresentativeSet, SelectionError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("probability row of length {0} is too short for a margin")]
    RowTooShort(usize),
    #[error("every point is in the representative set")]
    EmptyComplement,
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("projection configured without a seed")]
    MissingSeed,
    #[error("abort: {0}")]
    Abort(String),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Aggregator weights `(α1, α2, α3)` for loss, uncertainty and diversity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "WeightsRepr", into = "WeightsRepr")]
pub struct ScoreWeights {
    pub alpha1: FixedScalar,
    pub alpha2: FixedScalar,
    pub alpha3: FixedScalar,
}

#[derive(Serialize, Deserialize)]
struct WeightsRepr {
    alpha1: f64,
    alpha2: f64,
    alpha3: f64,
}

impl From<WeightsRepr> for ScoreWeights {
    fn from(w: WeightsRepr) -> Self {
        Self::from_f64(w.alpha1, w.alpha2, w.alpha3)
    }
}

impl From<ScoreWeights> for WeightsRepr {
    fn from(w: ScoreWeights) -> Self {
        Self {
            alpha1: w.alpha1.to_f64(),
            alpha2: w.alpha2.to_f64(),
            alpha3: w.alpha3.to_f64(),
        }
    }
}

impl ScoreWeights {
    pub fn from_f64(a1: f64, a2: f64, a3: f64) -> Self {
        Self {
            alpha1: FixedScalar::from_f64(a1),
            alpha2: FixedScalar::from_f64(a2),
            alpha3: FixedScalar::from_f64(a3),
        }
    }
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self::from_f64(0.2, 0.1, 0.7)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Uncertainty {
    #[default]
    Entropy,
    Margin,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diversity {
    #[default]
    Maxmin,
    MeanPairwise,
    FeatureStd,
}

/// Select on JL-projected features. The seed is filled in by the joint coin
/// flip when the protocol runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub dim: usize,
    #[serde(default)]
    pub seed: Option<Digest>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub uncertainty: Uncertainty,
    pub diversity: Diversity,
    pub weights: ScoreWeights,
    pub projection: Option<ProjectionConfig>,
}

impl ScoringConfig {
    pub fn from_json(text: &str) -> Result<Self, ScoreError> {
        serde_json::from_str(text).map_err(|e| ScoreError::Domain(format!("scoring config: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScoreReport {
    pub k: usize,
    pub l: FixedScalar,
    pub u: FixedScalar,
    pub d: FixedScalar,
    pub phi: FixedScalar,
}

#[derive(Serialize, Deserialize)]
struct ValueRepr {
    raw: i32,
    value: f64,
}

impl From<FixedScalar> for ValueRepr {
    fn from(v: FixedScalar) -> Self {
        Self {
            raw: v.raw(),
            value: v.to_f64(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ReportRepr {
    k: usize,
    l: ValueRepr,
    u: ValueRepr,
    d: ValueRepr,
    phi: ValueRepr,
}

impl Serialize for ScoreReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ReportRepr {
            k: self.k,
            l: self.l.into(),
            u: self.u.into(),
            d: self.d.into(),
            phi: self.phi.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScoreReport {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = ReportRepr::deserialize(d)?;
        Ok(Self {
            k: r.k,
            l: FixedScalar::from_raw(r.l.raw),
            u: FixedScalar::from_raw(r.u.raw),
            d: FixedScalar::from_raw(r.d.raw),
            phi: FixedScalar::from_raw(r.phi.raw),
        })
    }
}

/// Anything that maps a feature tensor to output logits.
pub trait Predictor {
    fn predict(&self, x: &FixedTensor) -> Result<FixedTensor, NumericError>;
}

impl Predictor for Model {
    fn predict(&self, x: &FixedTensor) -> Result<FixedTensor, NumericError> {
        self.forward(x)
    }
}

impl Predictor for SplitModel {
    fn predict(&self, x: &FixedTensor) -> Result<FixedTensor, NumericError> {
        self.forward(x)
    }
}

/// `R(D_B, k)`: k-center greedy, on projected features when configured.
pub fn select_representatives(
    xs: &[FixedTensor],
    k: usize,
    projection: Option<&ProjectionConfig>,
) -> Result<RepresentativeSet, ScoreError> {
    match projection {
        None => Ok(k_center_greedy(xs, k)?),
        Some(p) => {
            let seed = p.seed.ok_or(ScoreError::MissingSeed)?;
            let cols = xs.first().map_or(0, FixedTensor::len);
            let r = ProjectionMatrix::from_seed(seed, p.dim, cols);
            let projected = xs.iter().map(|x| jl_project(&r, x)).collect::<Result<Vec<_>, _>>()?;
            Ok(k_center_greedy(&projected, k)?)
        }
    }
}

/// `(l, u, d, φ)` from logits `y'` of the representatives, their labels, and
/// the parent features.
pub fn score_components(
    logits: &[FixedTensor],
    labels: &[FixedTensor],
    parent: &[FixedTensor],
    rep: &RepresentativeSet,
    config: &ScoringConfig,
) -> Result<ScoreReport, ScoreError> {
    if logits.len() != rep.k() || labels.len() != rep.k() {
        return Err(ScoreError::Domain(format!(
            "{} predictions and {} labels for {} representatives",
            logits.len(),
            labels.len(),
            rep.k()
        )));
    }
    let probs = logits.iter().map(probabilities).collect::<Result<Vec<_>, _>>()?;
    let l = mean_loss(&probs, labels)?;
    let u = match config.uncertainty {
        Uncertainty::Entropy => uncertainty_entropy(&probs)?,
        Uncertainty::Margin => uncertainty_margin(&probs)?,
    };
    let rep_x: Vec<FixedTensor> = rep.indices.iter().map(|&i| parent[i].clone()).collect();
    let d = match config.diversity {
        // With k = n every point represents itself.
        Diversity::Maxmin if rep.k() == parent.len() => FixedScalar::ZERO,
        Diversity::Maxmin => diversity_maxmin(parent, rep)?,
        Diversity::MeanPairwise => diversity_meanpairwise(&rep_x)?,
        Diversity::FeatureStd => diversity_feature_std(&rep_x)?,
    };
    let phi = aggregate(l, u, d, &config.weights)?;
    Ok(ScoreReport {
        k: rep.k(),
        l,
        u,
        d,
        phi,
    })
}

/// Cleartext `Score_multi`: select `D_R`, infer, score, aggregate.
pub fn score_multi_oracle<P: Predictor + ?Sized>(
    model: &P,
    dataset: &Dataset,
    k: usize,
    config: &ScoringConfig,
) -> Result<ScoreReport, ScoreError> {
    let rep = select_representatives(&dataset.xs, k, config.projection.as_ref())?;
    let logits = rep
        .indices
        .iter()
        .map(|&i| model.predict(&dataset.xs[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<FixedTensor> = rep.indices.iter().map(|&i| dataset.ys[i].clone()).collect();
    score_components(&logits, &labels, &dataset.xs, &rep, config)
}
