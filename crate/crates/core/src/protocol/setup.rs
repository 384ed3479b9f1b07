//! Offline setup records issued by the data and model authorities.
//!
//! A record is signed with a keyed hash `H(tag ∥ key ∥ body)`; holders of the
//! authority key can check it.

use serde::{Deserialize, Serialize};

use super::bob::bob_commitments;
use super::ProtocolError;
use crate::commitments::{hash_parts, mt_commit, CommitParams, Commitment, Digest};
use crate::model_split::SplitModel;
use crate::numerics::{FixedScalar, FixedTensor, LayerKind, Model, SplitBands};
use crate::selection::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorityKey(pub Digest);

impl Default for AuthorityKey {
    fn default() -> Self {
        Self(hash_parts(&[b"privade/demo-authority"]))
    }
}

impl AuthorityKey {
    fn sign<T: Serialize>(&self, tag: &[u8], body: &T) -> Digest {
        let bytes = bincode::serialize(body).expect("record bodies serialize");
        hash_parts(&[b"privade/authority", tag, self.0.as_bytes(), &bytes])
    }
}

/// Merkle root over a list of commitments, in order.
pub fn commitment_root(pp: &CommitParams, coms: &[Commitment]) -> Digest {
    let leaves: Vec<&[u8]> = coms.iter().map(|c| c.0.as_bytes().as_slice()).collect();
    mt_commit(pp, &leaves).map(|(r, _)| r).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataBody {
    pub n: usize,
    pub feature_shape: Vec<usize>,
    pub label_arity: usize,
    pub com_x_root: Digest,
    pub com_y_root: Digest,
}

/// Data authority's attestation of the committed dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRecord {
    pub body: DataBody,
    pub signature: Digest,
}

impl DataRecord {
    pub fn verify(&self, key: &AuthorityKey) -> bool {
        key.sign(b"data", &self.body) == self.signature
    }
}

/// Attests a dataset together with the owner's Stage-0 commitments, which
/// are derived from `owner_seed`.
pub fn issue_data_record(
    key: &AuthorityKey,
    pp: &CommitParams,
    dataset: &Dataset,
    owner_seed: u64,
) -> Result<DataRecord, ProtocolError> {
    if dataset.is_empty() {
        return Err(ProtocolError::Config("empty dataset".into()));
    }
    let coms = bob_commitments(pp, dataset, owner_seed);
    let body = DataBody {
        n: dataset.len(),
        feature_shape: dataset.feature_shape().to_vec(),
        label_arity: dataset.label_arity(),
        com_x_root: commitment_root(pp, &coms.com_x),
        com_y_root: commitment_root(pp, &coms.com_y),
    };
    let signature = key.sign(b"data", &body);
    Ok(DataRecord { body, signature })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelBody {
    pub input_shape: Vec<usize>,
    pub layer_kinds: Vec<LayerKind>,
    pub bands: SplitBands,
    pub model_digest: Digest,
}

/// Model authority's attestation that a split of the model was validated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub body: ModelBody,
    pub signature: Digest,
}

impl ModelRecord {
    pub fn verify(&self, key: &AuthorityKey) -> bool {
        key.sign(b"model", &self.body) == self.signature
    }

    pub fn kinds_b(&self) -> &[LayerKind] {
        &self.body.layer_kinds[self.body.bands.a_end..self.body.bands.b_end]
    }

    pub fn kinds_c(&self) -> &[LayerKind] {
        &self.body.layer_kinds[self.body.bands.b_end..]
    }

    /// Whether `split` has the attested architecture and cut points.
    pub fn matches_split(&self, split: &SplitModel) -> bool {
        let kinds = |m: &Model| m.layers.iter().map(|l| l.kind.clone()).collect::<Vec<_>>();
        let a = kinds(&split.a);
        let Some((LayerKind::ChannelPermute { .. }, a_body)) = a.split_last() else {
            return false;
        };
        let b = &self.body;
        split.bands == b.bands
            && split.a.input_shape == b.input_shape
            && a_body == &b.layer_kinds[..b.bands.a_end]
            && kinds(&split.b) == self.kinds_b()
            && kinds(&split.c) == self.kinds_c()
    }
}

/// Checks that `split` composes to exactly `model` on a probe input, then
/// attests the architecture and cut points.
pub fn issue_model_record(key: &AuthorityKey, model: &Model, split: &SplitModel) -> Result<ModelRecord, ProtocolError> {
    let body = ModelBody {
        input_shape: model.input_shape.clone(),
        layer_kinds: model.layers.iter().map(|l| l.kind.clone()).collect(),
        bands: split.bands,
        model_digest: hash_parts(&[&model.to_bytes(Some(split.bands))]),
    };
    let record = ModelRecord {
        signature: key.sign(b"model", &body),
        body,
    };
    if !record.matches_split(split) {
        return Err(ProtocolError::Config(
            "split does not match the model architecture".into(),
        ));
    }
    let len: usize = model.input_shape.iter().product();
    let probe: Vec<FixedScalar> = (0..len)
        .map(|i| FixedScalar::from_raw(((i as i32 * 7919) % 131_072) - 65_536))
        .collect();
    let probe = FixedTensor::new(model.input_shape.clone(), probe).map_err(|e| ProtocolError::Config(e.to_string()))?;
    let same = match (model.forward(&probe), split.forward(&probe)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if !same {
        return Err(ProtocolError::Config(
            "split model does not reproduce the unsplit model".into(),
        ));
    }
    Ok(record)
}
