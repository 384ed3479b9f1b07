use serde::{Deserialize, Serialize};

use super::{floor_div, FixedScalar, FixedTensor, NumericError, FRAC_BITS};

/// Layer type and hyperparameters.
///
/// Convolution and pooling layers operate on `[channels, height, width]`
/// tensors; linear layers on 1-D tensors.
///
/// Human-readable formats use an internal `"kind"` tag; binary formats the
/// plain enum encoding.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(remote = "Self", rename_all = "kebab-case")]
pub enum LayerKind {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Relu,
    #[serde(rename = "avgpool2d")]
    AvgPool2d {
        kernel: usize,
        stride: usize,
    },
    #[serde(rename = "maxpool2d")]
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    /// Runtime form carries folded per-channel `scale` and `shift` weights.
    #[serde(rename = "batchnorm2d")]
    BatchNorm2d {
        channels: usize,
    },
    Flatten,
    #[serde(rename = "adaptive-avgpool2d")]
    AdaptiveAvgPool2d {
        out_h: usize,
        out_w: usize,
    },
    /// Dropout at inference time.
    DropoutIdentity,
    /// `out[c] = in[perm[c]]` along the leading axis.
    ChannelPermute {
        perm: Vec<usize>,
    },
}

impl Serialize for LayerKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !s.is_human_readable() {
            return LayerKind::serialize(self, s);
        }
        use serde::ser::Error;
        let v = LayerKind::serialize(self, serde_json::value::Serializer).map_err(S::Error::custom)?;
        let tagged = match v {
            serde_json::Value::String(name) => serde_json::json!({ "kind": name }),
            serde_json::Value::Object(outer) => {
                let (name, fields) = outer
                    .into_iter()
                    .next()
                    .ok_or_else(|| S::Error::custom("empty layer kind"))?;
                let mut map = match fields {
                    serde_json::Value::Object(m) => m,
                    _ => serde_json::Map::new(),
                };
                map.insert("kind".into(), serde_json::Value::String(name));
                serde_json::Value::Object(map)
            }
            _ => return Err(S::Error::custom("unexpected layer kind encoding")),
        };
        tagged.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LayerKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        if !d.is_human_readable() {
            return LayerKind::deserialize(d);
        }
        use serde::de::Error;
        let mut map = match serde_json::Value::deserialize(d)? {
            serde_json::Value::Object(m) => m,
            _ => return Err(D::Error::custom("layer kind must be an object")),
        };
        let name = match map.remove("kind") {
            Some(serde_json::Value::String(n)) => n,
            _ => return Err(D::Error::missing_field("kind")),
        };
        let external = if map.is_empty() {
            serde_json::Value::String(name)
        } else {
            serde_json::json!({ name: map })
        };
        LayerKind::deserialize(external).map_err(D::Error::custom)
    }
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Linear { .. } => "linear",
            LayerKind::Relu => "relu",
            LayerKind::AvgPool2d { .. } => "avgpool2d",
            LayerKind::MaxPool2d { .. } => "maxpool2d",
            LayerKind::BatchNorm2d { .. } => "batchnorm2d",
            LayerKind::Flatten => "flatten",
            LayerKind::AdaptiveAvgPool2d { .. } => "adaptive-avgpool2d",
            LayerKind::DropoutIdentity => "dropout-identity",
            LayerKind::ChannelPermute { .. } => "channel-permute",
        }
    }

    /// Named weight slots and their shapes, in storage order.
    pub fn weight_slots(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ("weight", vec![out_channels, in_channels, kernel, kernel]),
                ("bias", vec![out_channels]),
            ],
            LayerKind::Linear {
                in_features,
                out_features,
            } => vec![
                ("weight", vec![out_features, in_features]),
                ("bias", vec![out_features]),
            ],
            LayerKind::BatchNorm2d { channels } => {
                vec![("scale", vec![channels]), ("shift", vec![channels])]
            }
            _ => Vec::new(),
        }
    }

    /// Number of trainable parameters. Batch norm counts its affine pair.
    pub fn parameter_count(&self) -> usize {
        self.weight_slots()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// Whether the layer mixes values across channels or features.
    pub fn is_mixing(&self) -> bool {
        matches!(self, LayerKind::Conv2d { .. } | LayerKind::Linear { .. })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NumericError> {
        let mismatch = |expected: Vec<usize>| NumericError::ShapeMismatch {
            expected,
            found: input.to_vec(),
        };
        match *self {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = chw(input).ok_or_else(|| mismatch(vec![in_channels, 0, 0]))?;
                if c != in_channels || stride == 0 || kernel == 0 {
                    return Err(mismatch(vec![in_channels, h, w]));
                }
                let oh = window_count(h + 2 * padding, kernel, stride)
                    .ok_or_else(|| mismatch(vec![in_channels, kernel, kernel]))?;
                let ow = window_count(w + 2 * padding, kernel, stride)
                    .ok_or_else(|| mismatch(vec![in_channels, kernel, kernel]))?;
                Ok(vec![out_channels, oh, ow])
            }
            LayerKind::Linear {
                in_features,
                out_features,
            } => {
                if input != [in_features] {
                    return Err(mismatch(vec![in_features]));
                }
                Ok(vec![out_features])
            }
            LayerKind::Relu | LayerKind::DropoutIdentity => Ok(input.to_vec()),
            LayerKind::AvgPool2d { kernel, stride } | LayerKind::MaxPool2d { kernel, stride } => {
                let [c, h, w] = chw(input).ok_or_else(|| mismatch(vec![0, kernel, kernel]))?;
                if stride == 0 || kernel == 0 {
                    return Err(mismatch(vec![c, h, w]));
                }
                let oh = window_count(h, kernel, stride).ok_or_else(|| mismatch(vec![c, kernel, kernel]))?;
                let ow = window_count(w, kernel, stride).ok_or_else(|| mismatch(vec![c, kernel, kernel]))?;
                Ok(vec![c, oh, ow])
            }
            LayerKind::BatchNorm2d { channels } => match chw(input) {
                Some([c, _, _]) if c == channels => Ok(input.to_vec()),
                _ => Err(mismatch(vec![channels, 0, 0])),
            },
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::AdaptiveAvgPool2d { out_h, out_w } => {
                let [c, h, w] = chw(input).ok_or_else(|| mismatch(vec![0, out_h, out_w]))?;
                if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
                    return Err(mismatch(vec![c, out_h, out_w]));
                }
                Ok(vec![c, out_h, out_w])
            }
            LayerKind::ChannelPermute { ref perm } => {
                if input.first() != Some(&perm.len()) || !is_permutation(perm) {
                    return Err(mismatch(vec![perm.len()]));
                }
                Ok(input.to_vec())
            }
        }
    }
}

fn chw(shape: &[usize]) -> Option<[usize; 3]> {
    match *shape {
        [c, h, w] => Some([c, h, w]),
        _ => None,
    }
}

fn window_count(extent: usize, kernel: usize, stride: usize) -> Option<usize> {
    (extent >= kernel).then(|| (extent - kernel) / stride + 1)
}

pub(crate) fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter()
        .all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
}

/// A layer together with its weight tensors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    pub weights: Vec<FixedTensor>,
}

impl Layer {
    pub fn new(kind: LayerKind, weights: Vec<FixedTensor>) -> Result<Self, NumericError> {
        let layer = Self { kind, weights };
        layer.check_weights()?;
        Ok(layer)
    }

    pub fn parameterless(kind: LayerKind) -> Self {
        Self {
            kind,
            weights: Vec::new(),
        }
    }

    pub fn check_weights(&self) -> Result<(), NumericError> {
        let slots = self.kind.weight_slots();
        if slots.len() != self.weights.len() {
            return Err(NumericError::MissingWeights(self.kind.name()));
        }
        for ((_, shape), w) in slots.iter().zip(&self.weights) {
            if w.shape() != shape.as_slice() {
                return Err(NumericError::ShapeMismatch {
                    expected: shape.clone(),
                    found: w.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &FixedTensor) -> Result<FixedTensor, NumericError> {
        layer_forward(&self.kind, &self.weights, input)
    }

    /// Canonical encoding of kind and weights, used as a Merkle leaf for the layer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.kind).expect("layer kind serializes");
        out.splice(0..0, (out.len() as u32).to_le_bytes());
        for w in &self.weights {
            let bytes = w.to_bytes();
            out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        out
    }
}

/// Evaluates one layer. Pure and deterministic.
pub fn layer_forward(
    kind: &LayerKind,
    weights: &[FixedTensor],
    input: &FixedTensor,
) -> Result<FixedTensor, NumericError> {
    let out_shape = kind.output_shape(input.shape())?;
    let slots = kind.weight_slots();
    if slots.len() != weights.len() || slots.iter().zip(weights).any(|((_, s), w)| w.shape() != s.as_slice()) {
        return Err(NumericError::MissingWeights(kind.name()));
    }
    let x = input.data();
    let data = match *kind {
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => conv2d(
            x,
            input.shape(),
            weights[0].data(),
            weights[1].data(),
            Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            },
            &out_shape,
        )?,
        LayerKind::Linear {
            in_features,
            out_features,
        } => {
            let w = weights[0].data();
            let b = weights[1].data();
            (0..out_features)
                .map(|o| {
                    let row = &w[o * in_features..(o + 1) * in_features];
                    let acc: i128 = row
                        .iter()
                        .zip(x)
                        .map(|(a, v)| (a.raw() as i64 * v.raw() as i64) as i128)
                        .sum();
                    narrow(acc, b[o])
                })
                .collect::<Result<_, _>>()?
        }
        LayerKind::Relu => x.iter().map(|&v| v.max(FixedScalar::ZERO)).collect(),
        LayerKind::DropoutIdentity | LayerKind::Flatten => x.to_vec(),
        LayerKind::AvgPool2d { kernel, stride } => pool(
            x,
            input.shape(),
            &out_shape,
            |oy, ox| {
                let ys = oy * stride..oy * stride + kernel;
                let xs = ox * stride..ox * stride + kernel;
                (ys, xs)
            },
            Reduce::Mean,
        )?,
        LayerKind::MaxPool2d { kernel, stride } => pool(
            x,
            input.shape(),
            &out_shape,
            |oy, ox| (oy * stride..oy * stride + kernel, ox * stride..ox * stride + kernel),
            Reduce::Max,
        )?,
        LayerKind::AdaptiveAvgPool2d { out_h, out_w } => {
            let (h, w) = (input.shape()[1], input.shape()[2]);
            pool(
                x,
                input.shape(),
                &out_shape,
                |oy, ox| {
                    (
                        (oy * h) / out_h..((oy + 1) * h).div_ceil(out_h),
                        (ox * w) / out_w..((ox + 1) * w).div_ceil(out_w),
                    )
                },
                Reduce::Mean,
            )?
        }
        LayerKind::BatchNorm2d { channels } => {
            let plane = x.len() / channels;
            let scale = weights[0].data();
            let shift = weights[1].data();
            x.chunks(plane)
                .enumerate()
                .flat_map(|(c, chunk)| chunk.iter().map(move |&v| (c, v)))
                .map(|(c, v)| v.checked_mul(scale[c])?.checked_add(shift[c]))
                .collect::<Result<_, _>>()?
        }
        LayerKind::ChannelPermute { ref perm } => {
            let block = x.len() / perm.len();
            perm.iter()
                .flat_map(|&src| x[src * block..(src + 1) * block].iter().copied())
                .collect()
        }
    };
    FixedTensor::new(out_shape, data)
}

/// `floor(acc / 2^16) + bias`, checked to fit Q16.16.
#[inline]
fn narrow(acc: i128, bias: FixedScalar) -> Result<FixedScalar, NumericError> {
    let v = (acc >> FRAC_BITS) + bias.raw() as i128;
    i32::try_from(v)
        .map(FixedScalar::from_raw)
        .map_err(|_| NumericError::Overflow)
}

struct Conv {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

fn conv2d(
    x: &[FixedScalar],
    in_shape: &[usize],
    w: &[FixedScalar],
    b: &[FixedScalar],
    p: Conv,
    out_shape: &[usize],
) -> Result<Vec<FixedScalar>, NumericError> {
    let (h, wd) = (in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let k = p.kernel;
    let mut out = Vec::with_capacity(p.out_channels * oh * ow);
    let mut acc = vec![0i128; oh * ow];
    for o in 0..p.out_channels {
        acc.iter_mut().for_each(|a| *a = 0);
        for c in 0..p.in_channels {
            let plane = &x[c * h * wd..(c + 1) * h * wd];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w[((o * p.in_channels + c) * k + ky) * k + kx].raw() as i64;
                    if wv == 0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &plane[iy as usize * wd..(iy as usize + 1) * wd];
                        let arow = &mut acc[oy * ow..(oy + 1) * ow];
                        for (ox, a) in arow.iter_mut().enumerate() {
                            let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            *a += (wv * row[ix as usize].raw() as i64) as i128;
                        }
                    }
                }
            }
        }
        for &a in &acc {
            out.push(narrow(a, b[o])?);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum Reduce {
    Mean,
    Max,
}

fn pool(
    x: &[FixedScalar],
    in_shape: &[usize],
    out_shape: &[usize],
    window: impl Fn(usize, usize) -> (std::ops::Range<usize>, std::ops::Range<usize>),
    reduce: Reduce,
) -> Result<Vec<FixedScalar>, NumericError> {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let (ys, xs) = window(oy, ox);
                let count = (ys.len() * xs.len()) as i64;
                let cells = ys.flat_map(|y| xs.clone().map(move |xx| plane[y * w + xx]));
                let v = match reduce {
                    Reduce::Mean => {
                        let sum: i64 = cells.map(|v| v.raw() as i64).sum();
                        FixedScalar::from_wide(floor_div(sum, count))?
                    }
                    Reduce::Max => cells.max().unwrap_or(FixedScalar::ZERO),
                };
                out.push(v);
            }
        }
    }
    Ok(out)
}
