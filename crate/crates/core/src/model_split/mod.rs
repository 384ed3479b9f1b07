//! Three-way model split `C ∘ B ∘ A` with a secret channel mixer.
//!
//! Block A runs jointly and ends with a secret permutation of its output
//! channels. The inverse permutation is folded into the weights that follow,
//! up to and including the first layer that mixes channels, so the composed
//! blocks compute exactly the unsplit model.

mod architectures;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use architectures::{Architecture, ARCHITECTURE_NAMES};

use crate::commitments::hash_parts;
use crate::numerics::{FixedTensor, Layer, LayerKind, Model, NumericError, SplitBands};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    #[error("invalid cut: {0}")]
    InvalidCut(String),
    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),
    #[error("bad model config: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    A,
    B,
    C,
}

/// The factored model. Block A includes the trailing mixer layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitModel {
    pub a: Model,
    pub b: Model,
    pub c: Model,
    /// `mixed[c] = a_out[mixer[c]]`.
    pub mixer: Vec<usize>,
    /// Cut points in the unsplit layer list.
    pub bands: SplitBands,
}

impl SplitModel {
    pub fn block(&self, block: Block) -> &Model {
        match block {
            Block::A => &self.a,
            Block::B => &self.b,
            Block::C => &self.c,
        }
    }

    /// Runs `C(B(A(x)))`.
    pub fn forward(&self, x: &FixedTensor) -> Result<FixedTensor, NumericError> {
        let a = self.a.forward(x)?;
        let b = self.b.forward(&a)?;
        self.c.forward(&b)
    }
}

/// Index one past the first activation layer.
pub fn first_activation_end(model: &Model) -> Option<usize> {
    model
        .layers
        .iter()
        .position(|l| matches!(l.kind, LayerKind::Relu))
        .map(|p| p + 1)
}

/// Seed-derived permutation of `n` elements.
pub fn mixer_from_seed(seed: &[u8], n: usize) -> Vec<usize> {
    let key = hash_parts(&[b"privade/mixer", seed]);
    let mut rng = ChaCha20Rng::from_seed(key.0);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

pub fn split_model(model: &Model, cut_bc: usize, mixer_seed: &[u8]) -> Result<SplitModel, SplitError> {
    let a_end =
        first_activation_end(model).ok_or_else(|| SplitError::InvalidCut("model has no activation layer".into()))?;
    let channels = model.shapes()?[a_end][0];
    split_model_with_mixer(model, cut_bc, mixer_from_seed(mixer_seed, channels))
}

/// Splits with an explicit permutation; the identity gives a mixer-free split.
pub fn split_model_with_mixer(model: &Model, cut_bc: usize, mixer: Vec<usize>) -> Result<SplitModel, SplitError> {
    let shapes = model.shapes()?;
    let a_end =
        first_activation_end(model).ok_or_else(|| SplitError::InvalidCut("model has no activation layer".into()))?;
    if cut_bc <= a_end || cut_bc >= model.layers.len() {
        return Err(SplitError::InvalidCut(format!(
            "B-C cut {cut_bc} must lie in ({a_end}, {})",
            model.layers.len()
        )));
    }
    let a_out = &shapes[a_end];
    if a_out.first() != Some(&mixer.len()) || !is_permutation(&mixer) {
        return Err(SplitError::InvalidCut(format!(
            "mixer must permute the {} leading entries of {:?}",
            a_out.first().copied().unwrap_or(0),
            a_out
        )));
    }
    let mut a_layers = model.layers[..a_end].to_vec();
    a_layers.push(Layer::parameterless(LayerKind::ChannelPermute { perm: mixer.clone() }));
    let mut rest = model.layers[a_end..].to_vec();
    fold_inverse_mixer(&mut rest, a_out, &mixer)?;
    let c_layers = rest.split_off(cut_bc - a_end);
    Ok(SplitModel {
        a: Model::new(model.input_shape.clone(), a_layers)?,
        b: Model::new(a_out.clone(), rest)?,
        c: Model::new(shapes[cut_bc].clone(), c_layers)?,
        mixer,
        bands: SplitBands { a_end, b_end: cut_bc },
    })
}

fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter()
        .all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
}

enum Mixed {
    Channels(Vec<usize>),
    Features(Vec<usize>),
}

fn gather(t: &FixedTensor, axis_len: usize, perm: &[usize], block: usize) -> FixedTensor {
    let x = t.data();
    let outer = x.len() / (axis_len * block);
    let mut data = Vec::with_capacity(x.len());
    for o in 0..outer {
        let base = o * axis_len * block;
        for &p in perm {
            data.extend_from_slice(&x[base + p * block..base + (p + 1) * block]);
        }
    }
    FixedTensor::new(t.shape().to_vec(), data).expect("permutation keeps length")
}

/// Rewrites `layers` (which consume mixed activations of shape `shape`) so
/// they compute what the original layers compute on unmixed activations.
fn fold_inverse_mixer(layers: &mut [Layer], shape: &[usize], mixer: &[usize]) -> Result<(), SplitError> {
    let mut state = if shape.len() == 1 {
        Mixed::Features(mixer.to_vec())
    } else {
        Mixed::Channels(mixer.to_vec())
    };
    let mut shape = shape.to_vec();
    for layer in layers.iter_mut() {
        let next_shape = layer.kind.output_shape(&shape)?;
        match (&layer.kind, &state) {
            (
                LayerKind::Conv2d {
                    in_channels, kernel, ..
                },
                Mixed::Channels(perm),
            ) => {
                let block = kernel * kernel;
                layer.weights[0] = gather(&layer.weights[0], *in_channels, perm, block);
                return Ok(());
            }
            (LayerKind::Linear { in_features, .. }, Mixed::Features(perm)) => {
                layer.weights[0] = gather(&layer.weights[0], *in_features, perm, 1);
                return Ok(());
            }
            (LayerKind::BatchNorm2d { channels }, Mixed::Channels(perm)) => {
                for w in &mut layer.weights {
                    *w = gather(w, *channels, perm, 1);
                }
            }
            (LayerKind::Flatten, Mixed::Channels(perm)) => {
                let plane: usize = shape[1..].iter().product();
                let features = perm
                    .iter()
                    .flat_map(|&p| (0..plane).map(move |s| p * plane + s))
                    .collect();
                state = Mixed::Features(features);
            }
            (
                LayerKind::Relu
                | LayerKind::DropoutIdentity
                | LayerKind::AvgPool2d { .. }
                | LayerKind::MaxPool2d { .. }
                | LayerKind::AdaptiveAvgPool2d { .. },
                Mixed::Channels(_),
            )
            | (LayerKind::Relu | LayerKind::DropoutIdentity | LayerKind::Flatten, Mixed::Features(_)) => {}
            (kind, _) => {
                return Err(SplitError::InvalidCut(format!(
                    "cannot carry the mixer through a {} layer",
                    kind.name()
                )))
            }
        }
        shape = next_shape;
    }
    Err(SplitError::InvalidCut("no channel-mixing layer follows block A".into()))
}

pub fn forward_block(block: Block, model: &SplitModel, input: &FixedTensor) -> Result<FixedTensor, NumericError> {
    model.block(block).forward(input)
}

/// Per-layer activations: `levels[l][i]` is `a_{l,i}`, with `a_0` the inputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub levels: Vec<Vec<FixedTensor>>,
}

impl ForwardTrace {
    /// Number of layers `L`; the trace holds `L + 1` levels.
    pub fn layers(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn points(&self) -> usize {
        self.levels[0].len()
    }

    pub fn outputs(&self) -> &[FixedTensor] {
        self.levels.last().unwrap()
    }
}

pub fn full_trace(block: &Model, inputs: &[FixedTensor]) -> Result<ForwardTrace, NumericError> {
    use rayon::prelude::*;
    let per_point = inputs
        .par_iter()
        .map(|x| block.forward_all(x))
        .collect::<Result<Vec<_>, _>>()?;
    let mut levels = vec![Vec::with_capacity(inputs.len()); block.layers.len() + 1];
    for acts in per_point {
        for (level, a) in levels.iter_mut().zip(acts) {
            level.push(a);
        }
    }
    Ok(ForwardTrace { levels })
}
