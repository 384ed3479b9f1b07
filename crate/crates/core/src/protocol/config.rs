use serde::{Deserialize, Serialize};

use super::adversary::Adversary;
use super::setup::{AuthorityKey, DataRecord, ModelRecord};
use super::ProtocolError;
use crate::commitments::{setup_com, CommitParams};
use crate::model_split::SplitModel;
use crate::numerics::FixedScalar;
use crate::scoring::ScoringConfig;
use crate::selection::Dataset;

/// How much of one block's trace is audited. `None` audits everything.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditSpec {
    pub points: Option<usize>,
    pub layers: Option<usize>,
}

impl AuditSpec {
    /// `(m, s)` for a block of `layers` layers over `points` points.
    pub fn resolve(&self, points: usize, layers: usize) -> (usize, usize) {
        (
            self.points.unwrap_or(points).clamp(1, points.max(1)),
            self.layers.unwrap_or(layers).clamp(1, layers.max(1)),
        )
    }
}

mod decimal {
    use crate::numerics::FixedScalar;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &FixedScalar, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.to_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FixedScalar, D::Error> {
        let v = f64::deserialize(d)?;
        FixedScalar::try_from_f64(v).map_err(serde::de::Error::custom)
    }
}

/// Public parameters of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Representative set size.
    pub k: usize,
    /// Distance threshold.
    #[serde(with = "decimal")]
    pub d: FixedScalar,
    /// Outlier ratio.
    pub delta: f64,
    /// CP challenge count `|I|`.
    pub num_challenges: usize,
    pub audit_b: AuditSpec,
    pub audit_c: AuditSpec,
    pub scoring: ScoringConfig,
    pub security_level: u32,
    pub dealer_seed: u64,
    /// Per-message wait bound for socket transports.
    pub timeout_ms: u64,
    pub authority: AuthorityKey,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 50,
            d: FixedScalar::from_int(1),
            delta: 0.05,
            num_challenges: 20,
            audit_b: AuditSpec::default(),
            audit_c: AuditSpec::default(),
            scoring: ScoringConfig::default(),
            security_level: 128,
            dealer_seed: 0,
            timeout_ms: 30_000,
            authority: AuthorityKey::default(),
        }
    }
}

impl RunConfig {
    pub fn commit_params(&self) -> Result<CommitParams, ProtocolError> {
        setup_com(self.security_level).map_err(|e| ProtocolError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        serde_json::from_str(text).map_err(|e| ProtocolError::Config(e.to_string()))
    }

    /// Checks the parameters against the shapes they will be used with.
    pub fn validate(&self, n: usize) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Config(m));
        if self.k == 0 || self.k > n {
            return bad(format!("k = {} must lie in [1, {n}]", self.k));
        }
        if self.d.raw() <= 0 {
            return bad("d must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad(format!("δ = {} outside [0, 1]", self.delta));
        }
        if self.num_challenges == 0 || self.num_challenges > n {
            return bad(format!("{} challenges for {n} points", self.num_challenges));
        }
        if let Some(p) = &self.scoring.projection {
            if p.dim == 0 {
                return bad("projection dimension must be positive".into());
            }
        }
        self.commit_params().map(|_| ())
    }
}

/// Model owner's private inputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AliceInputs {
    pub model: SplitModel,
    pub record: ModelRecord,
    pub seed: u64,
    pub adversary: Option<Adversary>,
}

/// Data owner's private inputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BobInputs {
    pub dataset: Dataset,
    pub record: DataRecord,
    pub seed: u64,
    pub adversary: Option<Adversary>,
}

impl AliceInputs {
    pub fn new(model: SplitModel, record: ModelRecord, seed: u64) -> Self {
        Self {
            model,
            record,
            seed,
            adversary: None,
        }
    }
}

impl BobInputs {
    pub fn new(dataset: Dataset, record: DataRecord, seed: u64) -> Self {
        Self {
            dataset,
            record,
            seed,
            adversary: None,
        }
    }
}
