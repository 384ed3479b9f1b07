//! Cut-and-choose audit of a batched forward pass over Merkle-committed
//! activation traces.
//!
//! The prover commits one Merkle root `R_l` per activation level
//! (`a_{l,i}` at position `i`), plus `R_θ` over the layers (hidden weights)
//! or `R_X` over the inputs (hidden data). The verifier samples points `S`
//! and per-point layer sets `T_i`; each sampled transition is opened and
//! recomputed bit-exactly.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AuditError;
use crate::commitments::{
    mt_commit, mt_open, mt_verify, open, CommitParams, Commitment, Digest, MerklePath, MerkleTree, Randomness,
};
use crate::model_split::{full_trace, ForwardTrace};
use crate::numerics::{FixedTensor, Layer, LayerKind, Model};

pub const TRANSPARENT_BACKEND: &str = "transparent-audit";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Weights and outputs are private, inputs public.
    HiddenWeights,
    /// Inputs are private, weights and outputs public.
    HiddenData,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceCommitment {
    pub variant: Variant,
    /// `R_0 ..= R_L`.
    pub level_roots: Vec<Digest>,
    /// `R_θ` or `R_X`.
    pub aux_root: Digest,
}

/// Sampled points and, per point, the audited layers (1-based).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    pub points: Vec<usize>,
    pub layers: Vec<Vec<usize>>,
}

impl Challenge {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.points
            .iter()
            .zip(&self.layers)
            .flat_map(|(&i, ls)| ls.iter().map(move |&l| (i, l)))
    }
}

pub fn cnczk_challenge<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    l: usize,
    m: usize,
    s: usize,
) -> Result<Challenge, AuditError> {
    if m == 0 || m > n || s == 0 || s > l {
        return Err(AuditError::PlanInvalid(format!("m={m} of N={n}, s={s} of L={l}")));
    }
    let mut points = sample(rng, n, m).into_vec();
    points.sort_unstable();
    let layers = points
        .iter()
        .map(|_| {
            let mut t: Vec<usize> = sample(rng, l, s).into_iter().map(|x| x + 1).collect();
            t.sort_unstable();
            t
        })
        .collect();
    Ok(Challenge { points, layers })
}

/// Opening of one layer transition `a_{l-1,i} → a_{l,i}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionProof {
    pub point: usize,
    pub layer: usize,
    pub input: FixedTensor,
    pub input_path: MerklePath,
    pub output: FixedTensor,
    pub output_path: MerklePath,
    /// Opens `com_{y'_i}` when `layer == L` and outputs are committed.
    pub output_randomness: Option<Randomness>,
}

/// Opening of `x_i` at `R_0`, and at `R_X` in the hidden-data variant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputProof {
    pub point: usize,
    pub x: FixedTensor,
    pub level_path: MerklePath,
    pub data_path: Option<MerklePath>,
    /// Opens `com_{x_i}` when inputs are committed.
    pub randomness: Option<Randomness>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerOpening {
    pub layer: usize,
    pub weights: Layer,
    pub path: MerklePath,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnczkProof {
    pub backend: String,
    pub transitions: Vec<TransitionProof>,
    pub inputs: Vec<InputProof>,
    /// Hidden-weights variant: each audited layer once.
    pub layers: Vec<LayerOpening>,
}

/// Prover-side state after committing a trace.
#[derive(Clone, Debug)]
pub struct CnczkProver {
    pp: CommitParams,
    variant: Variant,
    layers: Vec<Layer>,
    trace: ForwardTrace,
    level_trees: Vec<MerkleTree>,
    aux_tree: MerkleTree,
    data: Vec<FixedTensor>,
    input_randomness: Option<Vec<Randomness>>,
    output_randomness: Option<Vec<Randomness>>,
}

fn tree_of(pp: &CommitParams, tensors: &[FixedTensor]) -> Result<MerkleTree, AuditError> {
    let leaves: Vec<Vec<u8>> = tensors.par_iter().map(FixedTensor::to_bytes).collect();
    Ok(mt_commit(pp, &leaves)?.1)
}

/// Root over tensors as activation-level leaves.
pub fn tensor_root(pp: &CommitParams, tensors: &[FixedTensor]) -> Result<Digest, AuditError> {
    Ok(tree_of(pp, tensors)?.root())
}

/// Root over layers as weight leaves.
pub fn weights_root(pp: &CommitParams, layers: &[Layer]) -> Result<Digest, AuditError> {
    let leaves: Vec<Vec<u8>> = layers.iter().map(Layer::to_bytes).collect();
    Ok(mt_commit(pp, &leaves)?.0)
}

impl CnczkProver {
    /// Commits an arbitrary (possibly dishonest) trace. `data` is what `R_X`
    /// commits to; it defaults to the trace inputs.
    pub fn from_trace(
        pp: &CommitParams,
        variant: Variant,
        layers: Vec<Layer>,
        trace: ForwardTrace,
        data: Option<Vec<FixedTensor>>,
    ) -> Result<Self, AuditError> {
        if trace.levels.len() != layers.len() + 1 || trace.levels[0].is_empty() {
            return Err(AuditError::Malformed("trace does not match the block".into()));
        }
        let level_trees = trace
            .levels
            .par_iter()
            .map(|level| tree_of(pp, level))
            .collect::<Result<Vec<_>, _>>()?;
        let data = data.unwrap_or_else(|| trace.levels[0].clone());
        let aux_tree = match variant {
            Variant::HiddenWeights => {
                let leaves: Vec<Vec<u8>> = layers.iter().map(Layer::to_bytes).collect();
                mt_commit(pp, &leaves)?.1
            }
            Variant::HiddenData => tree_of(pp, &data)?,
        };
        Ok(Self {
            pp: *pp,
            variant,
            layers,
            trace,
            level_trees,
            aux_tree,
            data,
            input_randomness: None,
            output_randomness: None,
        })
    }

    pub fn with_input_randomness(mut self, r: Vec<Randomness>) -> Self {
        self.input_randomness = Some(r);
        self
    }

    pub fn with_output_randomness(mut self, r: Vec<Randomness>) -> Self {
        self.output_randomness = Some(r);
        self
    }

    pub fn trace(&self) -> &ForwardTrace {
        &self.trace
    }

    pub fn commitment(&self) -> TraceCommitment {
        TraceCommitment {
            variant: self.variant,
            level_roots: self.level_trees.iter().map(MerkleTree::root).collect(),
            aux_root: self.aux_tree.root(),
        }
    }

    pub fn prove(&self, challenge: &Challenge) -> Result<CnczkProof, AuditError> {
        let l_max = self.layers.len();
        let path = |tree: &MerkleTree, i: usize| mt_open(&self.pp, tree, i).map_err(AuditError::from);
        let transitions = challenge
            .pairs()
            .map(|(i, l)| {
                if l == 0 || l > l_max {
                    return Err(AuditError::PlanInvalid(format!("layer {l} out of range")));
                }
                Ok(TransitionProof {
                    point: i,
                    layer: l,
                    input: self.trace.levels[l - 1][i].clone(),
                    input_path: path(&self.level_trees[l - 1], i)?,
                    output: self.trace.levels[l][i].clone(),
                    output_path: path(&self.level_trees[l], i)?,
                    output_randomness: (l == l_max)
                        .then(|| self.output_randomness.as_ref().map(|r| r[i]))
                        .flatten(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let inputs = challenge
            .points
            .iter()
            .map(|&i| {
                Ok(InputProof {
                    point: i,
                    x: self.trace.levels[0][i].clone(),
                    level_path: path(&self.level_trees[0], i)?,
                    data_path: match self.variant {
                        Variant::HiddenData => Some(path(&self.aux_tree, i)?),
                        Variant::HiddenWeights => None,
                    },
                    randomness: self.input_randomness.as_ref().map(|r| r[i]),
                })
            })
            .collect::<Result<Vec<_>, AuditError>>()?;
        let layers = match self.variant {
            Variant::HiddenData => Vec::new(),
            Variant::HiddenWeights => {
                let audited: BTreeMap<usize, ()> = challenge.pairs().map(|(_, l)| (l, ())).collect();
                audited
                    .into_keys()
                    .map(|l| {
                        Ok(LayerOpening {
                            layer: l,
                            weights: self.layers[l - 1].clone(),
                            path: path(&self.aux_tree, l - 1)?,
                        })
                    })
                    .collect::<Result<Vec<_>, AuditError>>()?
            }
        };
        Ok(CnczkProof {
            backend: TRANSPARENT_BACKEND.to_string(),
            transitions,
            inputs,
            layers,
        })
    }

    /// The data `R_X` commits to.
    pub fn data(&self) -> &[FixedTensor] {
        &self.data
    }
}

/// Honest commitment to the trace of `block` on `inputs`.
pub fn cnczk_commit_trace(
    pp: &CommitParams,
    block: &Model,
    inputs: &[FixedTensor],
    variant: Variant,
) -> Result<(TraceCommitment, CnczkProver), AuditError> {
    let trace = full_trace(block, inputs)?;
    let prover = CnczkProver::from_trace(pp, variant, block.layers.clone(), trace, None)?;
    Ok((prover.commitment(), prover))
}

pub fn cnczk_prove(prover: &CnczkProver, challenge: &Challenge) -> Result<CnczkProof, AuditError> {
    prover.prove(challenge)
}

/// What the verifier knows about the audited block.
#[derive(Clone, Copy, Debug)]
pub struct CnczkPublic<'a> {
    pub variant: Variant,
    pub points: usize,
    pub layer_kinds: &'a [LayerKind],
    /// Public weights (hidden-data variant).
    pub layers: Option<&'a [Layer]>,
    /// Public inputs (hidden-weights variant).
    pub inputs: Option<&'a [FixedTensor]>,
    /// Public outputs (hidden-data variant).
    pub outputs: Option<&'a [FixedTensor]>,
    pub input_commitments: Option<&'a [Commitment]>,
    pub output_commitments: Option<&'a [Commitment]>,
}

/// First failed check.
#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("audit rejected at point {point:?}, layer {layer:?}: {reason}")]
pub struct CnczkRejection {
    pub point: Option<usize>,
    pub layer: Option<usize>,
    pub reason: String,
}

fn reject(point: Option<usize>, layer: Option<usize>, reason: impl Into<String>) -> CnczkRejection {
    CnczkRejection {
        point,
        layer,
        reason: reason.into(),
    }
}

/// Accepts iff every sampled check passes.
pub fn cnczk_verify(
    pp: &CommitParams,
    public: &CnczkPublic<'_>,
    commitment: &TraceCommitment,
    challenge: &Challenge,
    proof: &CnczkProof,
) -> Result<(), CnczkRejection> {
    let l_max = public.layer_kinds.len();
    let n = public.points;
    if commitment.variant != public.variant {
        return Err(reject(None, None, "variant mismatch"));
    }
    if commitment.level_roots.len() != l_max + 1 {
        return Err(reject(
            None,
            None,
            format!("{} level roots for {l_max} layers", commitment.level_roots.len()),
        ));
    }
    if proof.backend != TRANSPARENT_BACKEND {
        return Err(reject(None, None, format!("unknown proof backend `{}`", proof.backend)));
    }
    let roots = &commitment.level_roots;

    if let Some(outputs) = public.outputs {
        if outputs.len() != n || tensor_root(pp, outputs).ok() != Some(roots[l_max]) {
            return Err(reject(
                None,
                Some(l_max),
                "public outputs do not match the last level root",
            ));
        }
    }

    let mut weights: BTreeMap<usize, &Layer> = BTreeMap::new();
    match (public.variant, public.layers) {
        (Variant::HiddenData, Some(layers)) => {
            if layers.len() != l_max {
                return Err(reject(None, None, "public weights do not match the block"));
            }
            weights.extend(layers.iter().enumerate().map(|(k, w)| (k + 1, w)));
        }
        (Variant::HiddenData, None) => return Err(reject(None, None, "hidden-data audit needs public weights")),
        (Variant::HiddenWeights, _) => {
            for op in &proof.layers {
                let l = op.layer;
                if l == 0 || l > l_max || weights.contains_key(&l) {
                    return Err(reject(None, Some(l), "unexpected layer opening"));
                }
                if op.weights.kind != public.layer_kinds[l - 1] || op.weights.check_weights().is_err() {
                    return Err(reject(None, Some(l), "revealed layer does not match the architecture"));
                }
                if !mt_verify(pp, &commitment.aux_root, l - 1, &op.weights.to_bytes(), &op.path) {
                    return Err(reject(None, Some(l), "weights do not open against R_θ"));
                }
                weights.insert(l, &op.weights);
            }
        }
    }

    let expected: Vec<(usize, usize)> = challenge.pairs().collect();
    if proof.transitions.len() != expected.len() {
        return Err(reject(None, None, "proof does not cover the challenge"));
    }
    for (t, &(i, l)) in proof.transitions.iter().zip(&expected) {
        let at = |reason: &str| reject(Some(i), Some(l), reason);
        if (t.point, t.layer) != (i, l) || i >= n || l == 0 || l > l_max {
            return Err(at("transition answers a different challenge"));
        }
        if !mt_verify(pp, &roots[l - 1], i, &t.input.to_bytes(), &t.input_path) {
            return Err(at("input activation does not open"));
        }
        if !mt_verify(pp, &roots[l], i, &t.output.to_bytes(), &t.output_path) {
            return Err(at("output activation does not open"));
        }
        let layer = weights.get(&l).ok_or_else(|| at("audited layer was not opened"))?;
        match layer.forward(&t.input) {
            Ok(y) if y == t.output => {}
            Ok(_) => return Err(at("recomputed activation differs")),
            Err(e) => return Err(at(&format!("recomputation failed: {e}"))),
        }
        if l == l_max {
            if let Some(coms) = public.output_commitments {
                let ok = match (coms.get(i), &t.output_randomness) {
                    (Some(com), Some(r)) => open(pp, com, &t.output.to_bytes(), r),
                    _ => false,
                };
                if !ok {
                    return Err(at("output does not open its commitment"));
                }
            }
        }
    }

    if proof.inputs.len() != challenge.points.len() {
        return Err(reject(None, Some(0), "missing input openings"));
    }
    for (p, &i) in proof.inputs.iter().zip(&challenge.points) {
        let at = |reason: &str| reject(Some(i), Some(0), reason);
        if p.point != i {
            return Err(at("input opening for a different point"));
        }
        let bytes = p.x.to_bytes();
        if !mt_verify(pp, &roots[0], i, &bytes, &p.level_path) {
            return Err(at("input does not open against R_0"));
        }
        match public.variant {
            Variant::HiddenWeights => {
                if let Some(xs) = public.inputs {
                    if xs.get(i) != Some(&p.x) {
                        return Err(at("input differs from the public input"));
                    }
                }
            }
            Variant::HiddenData => {
                let ok = p
                    .data_path
                    .as_ref()
                    .is_some_and(|path| mt_verify(pp, &commitment.aux_root, i, &bytes, path));
                if !ok {
                    return Err(at("input does not match the committed data R_X"));
                }
            }
        }
        if let Some(coms) = public.input_commitments {
            let ok = match (coms.get(i), &p.randomness) {
                (Some(com), Some(r)) => open(pp, com, &bytes, r),
                _ => false,
            };
            if !ok {
                return Err(at("input does not open its commitment"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::FixedScalar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn block() -> Model {
        let lin = |w: &[f64], b: &[f64]| {
            Layer::new(
                LayerKind::Linear {
                    in_features: 2,
                    out_features: 2,
                },
                vec![
                    FixedTensor::from_f64(vec![2, 2], w).unwrap(),
                    FixedTensor::from_f64(vec![2], b).unwrap(),
                ],
            )
            .unwrap()
        };
        Model::new(
            vec![2],
            vec![
                lin(&[1.0, 0.5, -0.5, 1.0], &[0.1, 0.0]),
                Layer::parameterless(LayerKind::Relu),
            ],
        )
        .unwrap()
    }

    fn inputs(n: usize) -> Vec<FixedTensor> {
        (0..n)
            .map(|i| FixedTensor::from_f64(vec![2], &[i as f64 * 0.25, 1.0 - i as f64 * 0.5]).unwrap())
            .collect()
    }

    #[test]
    fn one_point_two_layers_gives_three_roots() {
        let pp = CommitParams::default();
        let (com, _) = cnczk_commit_trace(&pp, &block(), &inputs(1), Variant::HiddenWeights).unwrap();
        assert_eq!(com.level_roots.len(), 3);
    }

    #[test]
    fn full_challenge_covers_everything() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let c = cnczk_challenge(&mut rng, 4, 3, 4, 3).unwrap();
        assert_eq!(c.points, vec![0, 1, 2, 3]);
        assert!(c.layers.iter().all(|t| t == &vec![1, 2, 3]));
        assert!(cnczk_challenge(&mut rng, 4, 3, 5, 1).is_err());
        assert!(cnczk_challenge(&mut rng, 4, 3, 1, 0).is_err());
    }

    #[test]
    fn honest_runs_verify_in_both_variants() {
        let pp = CommitParams::default();
        let model = block();
        let xs = inputs(6);
        let kinds: Vec<LayerKind> = model.layers.iter().map(|l| l.kind.clone()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let challenge = cnczk_challenge(&mut rng, 6, 2, 3, 2).unwrap();

        let (com, prover) = cnczk_commit_trace(&pp, &model, &xs, Variant::HiddenWeights).unwrap();
        let proof = prover.prove(&challenge).unwrap();
        let public = CnczkPublic {
            variant: Variant::HiddenWeights,
            points: 6,
            layer_kinds: &kinds,
            layers: None,
            inputs: Some(&xs),
            outputs: None,
            input_commitments: None,
            output_commitments: None,
        };
        assert_eq!(cnczk_verify(&pp, &public, &com, &challenge, &proof), Ok(()));

        let (com, prover) = cnczk_commit_trace(&pp, &model, &xs, Variant::HiddenData).unwrap();
        let outputs = prover.trace().outputs().to_vec();
        let proof = prover.prove(&challenge).unwrap();
        let public = CnczkPublic {
            variant: Variant::HiddenData,
            layers: Some(&model.layers),
            inputs: None,
            outputs: Some(&outputs),
            ..public
        };
        assert_eq!(cnczk_verify(&pp, &public, &com, &challenge, &proof), Ok(()));
    }

    #[test]
    fn corrupted_transition_is_caught_only_when_sampled() {
        let pp = CommitParams::default();
        let model = block();
        let xs = inputs(4);
        let kinds: Vec<LayerKind> = model.layers.iter().map(|l| l.kind.clone()).collect();
        let mut trace = full_trace(&model, &xs).unwrap();
        trace.levels[1][2] = FixedTensor::vector(vec![FixedScalar::ONE, FixedScalar::ONE]);
        trace.levels[2][2] = model.layers[1].forward(&trace.levels[1][2]).unwrap();
        let prover = CnczkProver::from_trace(&pp, Variant::HiddenWeights, model.layers.clone(), trace, None).unwrap();
        let com = prover.commitment();
        let public = CnczkPublic {
            variant: Variant::HiddenWeights,
            points: 4,
            layer_kinds: &kinds,
            layers: None,
            inputs: Some(&xs),
            outputs: None,
            input_commitments: None,
            output_commitments: None,
        };
        let hit = Challenge {
            points: vec![2],
            layers: vec![vec![1]],
        };
        let err = cnczk_verify(&pp, &public, &com, &hit, &prover.prove(&hit).unwrap()).unwrap_err();
        assert_eq!((err.point, err.layer), (Some(2), Some(1)));
        let miss = Challenge {
            points: vec![1, 2],
            layers: vec![vec![1, 2], vec![2]],
        };
        assert!(cnczk_verify(&pp, &public, &com, &miss, &prover.prove(&miss).unwrap()).is_ok());
    }

    #[test]
    fn substituted_input_fails_data_check() {
        let pp = CommitParams::default();
        let model = block();
        let committed = inputs(3);
        let mut used = committed.clone();
        used[1] = FixedTensor::from_f64(vec![2], &[9.0, 9.0]).unwrap();
        let trace = full_trace(&model, &used).unwrap();
        let prover =
            CnczkProver::from_trace(&pp, Variant::HiddenData, model.layers.clone(), trace, Some(committed)).unwrap();
        let kinds: Vec<LayerKind> = model.layers.iter().map(|l| l.kind.clone()).collect();
        let public = CnczkPublic {
            variant: Variant::HiddenData,
            points: 3,
            layer_kinds: &kinds,
            layers: Some(&model.layers),
            inputs: None,
            outputs: None,
            input_commitments: None,
            output_commitments: None,
        };
        let c = Challenge {
            points: vec![1],
            layers: vec![vec![2]],
        };
        let err = cnczk_verify(&pp, &public, &prover.commitment(), &c, &prover.prove(&c).unwrap()).unwrap_err();
        assert_eq!((err.point, err.layer), (Some(1), Some(0)));
    }

    #[test]
    fn flipped_leaf_fails_merkle_check() {
        let pp = CommitParams::default();
        let model = block();
        let xs = inputs(4);
        let kinds: Vec<LayerKind> = model.layers.iter().map(|l| l.kind.clone()).collect();
        let (com, prover) = cnczk_commit_trace(&pp, &model, &xs, Variant::HiddenWeights).unwrap();
        let c = Challenge {
            points: vec![0],
            layers: vec![vec![2]],
        };
        let mut proof = prover.prove(&c).unwrap();
        proof.transitions[0].output.data_mut()[0] = FixedScalar::from_raw(12345);
        let public = CnczkPublic {
            variant: Variant::HiddenWeights,
            points: 4,
            layer_kinds: &kinds,
            layers: None,
            inputs: Some(&xs),
            outputs: None,
            input_commitments: None,
            output_commitments: None,
        };
        let err = cnczk_verify(&pp, &public, &com, &c, &proof).unwrap_err();
        assert_eq!(err.reason, "output activation does not open");
    }
}
