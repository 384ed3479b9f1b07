//! Sequential models and the binary model container.
//!
//! Container layout (all integers little-endian):
//!
//! | bytes | content                                        |
//! |-------|------------------------------------------------|
//! | 4     | magic `PDEM`                                   |
//! | 4     | `u32` format version (1)                       |
//! | 4     | `u32` manifest length `M`                      |
//! | M     | UTF-8 JSON manifest                            |
//! | rest  | weight buffers, `i32` Q16.16, concatenated     |
//!
//! The manifest lists `input_shape`, the `q_format` tag (`"Q16.16"`), every
//! layer with its hyperparameters and weight slots (`name`, `shape`, element
//! `offset` into the buffer region), and optional split bands.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{sqrt_q32, FixedScalar, FixedTensor, Layer, LayerKind, NumericError};

pub const MODEL_MAGIC: &[u8; 4] = b"PDEM";
pub const FORMAT_VERSION: u32 = 1;
pub const Q_FORMAT: &str = "Q16.16";
/// Batch-norm epsilon, `2^-10`.
pub const BATCHNORM_EPS: FixedScalar = FixedScalar::from_raw(1 << 6);

/// Boundaries of the three blocks: A is `[0, a_end)`, B is `[a_end, b_end)`,
/// C is `[b_end, len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBands {
    pub a_end: usize,
    pub b_end: usize,
}

/// A feed-forward model over a fixed input shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Model {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl Model {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self, NumericError> {
        let model = Self { input_shape, layers };
        model.shapes()?;
        Ok(model)
    }

    /// Activation shapes `a_0 .. a_L`, validating every layer on the way.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NumericError> {
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            layer.check_weights()?;
            let next = layer.kind.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>, NumericError> {
        Ok(self.shapes()?.pop().unwrap())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.kind.parameter_count()).sum()
    }

    pub fn forward(&self, input: &FixedTensor) -> Result<FixedTensor, NumericError> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(NumericError::ShapeMismatch {
                expected: self.input_shape.clone(),
                found: input.shape().to_vec(),
            });
        }
        self.layers
            .iter()
            .try_fold(input.clone(), |acc, layer| layer.forward(&acc))
    }

    /// Every activation `a_0 = input, ..., a_L = output`.
    pub fn forward_all(&self, input: &FixedTensor) -> Result<Vec<FixedTensor>, NumericError> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(NumericError::ShapeMismatch {
                expected: self.input_shape.clone(),
                found: input.shape().to_vec(),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap())?;
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn write_to<W: Write>(&self, split: Option<SplitBands>, mut w: W) -> Result<(), NumericError> {
        let mut offset = 0usize;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let weights = layer
                .kind
                .weight_slots()
                .into_iter()
                .zip(&layer.weights)
                .map(|((name, shape), t)| {
                    let entry = WeightEntry {
                        name: name.to_string(),
                        shape,
                        offset,
                    };
                    offset += t.len();
                    entry
                })
                .collect();
            layers.push(LayerEntry {
                kind: layer.kind.clone(),
                weights,
            });
        }
        let manifest = Manifest {
            q_format: Q_FORMAT.to_string(),
            input_shape: self.input_shape.clone(),
            layers,
            split,
        };
        let json = serde_json::to_vec(&manifest).map_err(|e| NumericError::Malformed(e.to_string()))?;
        let mut buf = Vec::with_capacity(12 + json.len() + 4 * offset);
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&json);
        for t in self.layers.iter().flat_map(|l| &l.weights) {
            for v in t.raw() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self, split: Option<SplitBands>) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(split, &mut out).expect("in-memory write");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<(Self, Option<SplitBands>), NumericError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, Option<SplitBands>), NumericError> {
        let malformed = |m: &str| NumericError::Malformed(format!("model container: {m}"));
        if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
            return Err(malformed("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(malformed("unsupported version"));
        }
        let mlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let json = bytes
            .get(12..12 + mlen)
            .ok_or_else(|| malformed("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(json).map_err(|e| malformed(&e.to_string()))?;
        if manifest.q_format != Q_FORMAT {
            return Err(malformed("unsupported q_format"));
        }
        let body = &bytes[12 + mlen..];
        if !body.len().is_multiple_of(4) {
            return Err(malformed("weight region not a multiple of 4 bytes"));
        }
        let raw: Vec<i32> = body
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor_at = |e: &WeightEntry| -> Result<FixedTensor, NumericError> {
            let len: usize = e.shape.iter().product();
            let slice = raw
                .get(e.offset..e.offset + len)
                .ok_or_else(|| malformed("weight slot out of range"))?;
            FixedTensor::from_raw(e.shape.clone(), slice.to_vec())
        };
        let mut layers = Vec::with_capacity(manifest.layers.len());
        for entry in &manifest.layers {
            let names: Vec<&str> = entry.weights.iter().map(|w| w.name.as_str()).collect();
            let tensors = entry.weights.iter().map(tensor_at).collect::<Result<Vec<_>, _>>()?;
            let weights = match (&entry.kind, names.as_slice()) {
                (LayerKind::BatchNorm2d { .. }, ["gamma", "beta", "running_mean", "running_var"]) => {
                    let (scale, shift) = fold_batchnorm(&tensors[0], &tensors[1], &tensors[2], &tensors[3])?;
                    vec![scale, shift]
                }
                _ => tensors,
            };
            layers.push(Layer::new(entry.kind.clone(), weights)?);
        }
        Ok((Model::new(manifest.input_shape, layers)?, manifest.split))
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    q_format: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<SplitBands>,
}

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    #[serde(flatten)]
    kind: LayerKind,
    weights: Vec<WeightEntry>,
}

#[derive(Serialize, Deserialize)]
struct WeightEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

/// Folds batch-norm statistics into a per-channel affine map:
/// `scale = gamma / sqrt(var + eps)`, `shift = beta - mean * scale`.
pub fn fold_batchnorm(
    gamma: &FixedTensor,
    beta: &FixedTensor,
    mean: &FixedTensor,
    var: &FixedTensor,
) -> Result<(FixedTensor, FixedTensor), NumericError> {
    let n = gamma.len();
    if [beta.len(), mean.len(), var.len()].iter().any(|&l| l != n) {
        return Err(NumericError::ShapeMismatch {
            expected: vec![n],
            found: vec![beta.len(), mean.len(), var.len()],
        });
    }
    let mut scale = Vec::with_capacity(n);
    let mut shift = Vec::with_capacity(n);
    for c in 0..n {
        let v = var.data()[c].checked_add(BATCHNORM_EPS)?;
        if v.raw() <= 0 {
            return Err(NumericError::Domain("batch-norm variance must be non-negative".into()));
        }
        let std = sqrt_q32((v.raw() as u128) << 16)?;
        let s = gamma.data()[c].checked_div(std)?;
        scale.push(s);
        shift.push(beta.data()[c].checked_sub(mean.data()[c].checked_mul(s)?)?);
    }
    Ok((FixedTensor::vector(scale), FixedTensor::vector(shift)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model() -> Model {
        let conv = Layer::new(
            LayerKind::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: 2,
                stride: 1,
                padding: 0,
            },
            vec![
                FixedTensor::from_f64(vec![2, 1, 2, 2], &[0.5, -0.25, 1.0, 0.125, 0.0, 1.0, -1.0, 2.0]).unwrap(),
                FixedTensor::from_f64(vec![2], &[0.1, -0.2]).unwrap(),
            ],
        )
        .unwrap();
        let bn = Layer::new(
            LayerKind::BatchNorm2d { channels: 2 },
            vec![
                FixedTensor::from_f64(vec![2], &[1.0, 0.5]).unwrap(),
                FixedTensor::from_f64(vec![2], &[0.0, 0.25]).unwrap(),
            ],
        )
        .unwrap();
        Model::new(
            vec![1, 3, 3],
            vec![
                conv,
                Layer::parameterless(LayerKind::Relu),
                bn,
                Layer::parameterless(LayerKind::Flatten),
            ],
        )
        .unwrap()
    }

    #[test]
    fn container_round_trips() {
        let model = tiny_model();
        let bands = SplitBands { a_end: 2, b_end: 3 };
        let bytes = model.to_bytes(Some(bands));
        assert_eq!(&bytes[..4], MODEL_MAGIC);
        let (back, split) = Model::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(split, Some(bands));
    }

    #[test]
    fn container_rejects_corruption() {
        let bytes = tiny_model().to_bytes(None);
        assert!(Model::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Model::from_bytes(&bad).is_err());
        assert!(Model::from_bytes(&bytes[..bytes.len() - 4]).is_err());
    }

    #[test]
    fn raw_batchnorm_folds_at_load() {
        let manifest = serde_json::json!({
            "q_format": "Q16.16",
            "input_shape": [1, 1, 1],
            "layers": [{
                "kind": "batchnorm2d", "channels": 1,
                "weights": [
                    {"name": "gamma", "shape": [1], "offset": 0},
                    {"name": "beta", "shape": [1], "offset": 1},
                    {"name": "running_mean", "shape": [1], "offset": 2},
                    {"name": "running_var", "shape": [1], "offset": 3}
                ]
            }]
        });
        let json = serde_json::to_vec(&manifest).unwrap();
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MODEL_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&json);
        // gamma 2, beta 1, mean 0.5, var 4 - eps
        for v in [2.0, 1.0, 0.5] {
            bytes.extend_from_slice(&FixedScalar::from_f64(v).raw().to_le_bytes());
        }
        bytes.extend_from_slice(&(FixedScalar::from_f64(4.0).raw() - BATCHNORM_EPS.raw()).to_le_bytes());
        let (model, _) = Model::from_bytes(&bytes).unwrap();
        let w = &model.layers[0].weights;
        assert_eq!(w[0].data()[0], FixedScalar::ONE);
        assert_eq!(w[1].data()[0], FixedScalar::from_f64(0.5));
        let out = model
            .forward(&FixedTensor::from_f64(vec![1, 1, 1], &[3.0]).unwrap())
            .unwrap();
        assert_eq!(out.data()[0], FixedScalar::from_f64(3.5));
    }

    #[test]
    fn forward_all_has_one_entry_per_level() {
        let model = tiny_model();
        let x = FixedTensor::from_f64(vec![1, 3, 3], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]).unwrap();
        let acts = model.forward_all(&x).unwrap();
        assert_eq!(acts.len(), model.layers.len() + 1);
        assert_eq!(acts.last().unwrap(), &model.forward(&x).unwrap());
        assert_eq!(model.parameter_count(), 10 + 4);
    }
}
