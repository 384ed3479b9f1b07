//! Bundled network configurations with their A/B/C split bands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::SplitError;
use crate::numerics::{fold_batchnorm, FixedScalar, FixedTensor, Layer, LayerKind, Model, SplitBands};

const LENETXS: &str = include_str!("../../configs/lenetxs.json");
const LENET5: &str = include_str!("../../configs/lenet5.json");
const CNN5: &str = include_str!("../../configs/cnn5.json");

pub const ARCHITECTURE_NAMES: [&str; 3] = ["lenetxs", "lenet5", "cnn5"];

/// Layer list without weights.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerKind>,
    pub split: SplitBands,
}

impl Architecture {
    pub fn builtin(name: &str) -> Result<Self, SplitError> {
        let json = match name {
            "lenetxs" => LENETXS,
            "lenet5" => LENET5,
            "cnn5" => CNN5,
            other => return Err(SplitError::UnknownArchitecture(other.to_string())),
        };
        Ok(serde_json::from_str(json).expect("bundled config parses"))
    }

    pub fn from_json(json: &str) -> Result<Self, SplitError> {
        serde_json::from_str(json).map_err(|e| SplitError::Config(e.to_string()))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerKind::parameter_count).sum()
    }

    /// Draws weights uniformly from `±1/sqrt(fan_in)`; batch norm gets
    /// near-identity statistics, folded at construction.
    pub fn random_model(&self, seed: u64) -> Result<Model, SplitError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let layers = self
            .layers
            .iter()
            .map(|kind| random_layer(kind, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Model::new(self.input_shape.clone(), layers)?)
    }
}

fn uniform_tensor(rng: &mut ChaCha20Rng, shape: Vec<usize>, lo: f64, hi: f64) -> FixedTensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| FixedScalar::from_f64(rng.gen_range(lo..hi))).collect();
    FixedTensor::new(shape, data).expect("length matches shape")
}

fn random_layer(kind: &LayerKind, rng: &mut ChaCha20Rng) -> Result<Layer, SplitError> {
    let weights = match *kind {
        LayerKind::Conv2d { .. } | LayerKind::Linear { .. } => {
            let fan_in = match *kind {
                LayerKind::Conv2d {
                    in_channels, kernel, ..
                } => in_channels * kernel * kernel,
                LayerKind::Linear { in_features, .. } => in_features,
                _ => unreachable!(),
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            kind.weight_slots()
                .into_iter()
                .map(|(_, shape)| uniform_tensor(rng, shape, -bound, bound))
                .collect()
        }
        LayerKind::BatchNorm2d { channels } => {
            let gamma = uniform_tensor(rng, vec![channels], 0.9, 1.1);
            let beta = uniform_tensor(rng, vec![channels], -0.1, 0.1);
            let mean = uniform_tensor(rng, vec![channels], -0.1, 0.1);
            let var = uniform_tensor(rng, vec![channels], 0.8, 1.2);
            let (scale, shift) = fold_batchnorm(&gamma, &beta, &mean, &var)?;
            vec![scale, shift]
        }
        _ => Vec::new(),
    };
    Ok(Layer::new(kind.clone(), weights)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts_match_reference_tables() {
        assert_eq!(Architecture::builtin("lenetxs").unwrap().parameter_count(), 3_968);
        assert_eq!(Architecture::builtin("lenet5").unwrap().parameter_count(), 61_706);
        assert_eq!(Architecture::builtin("cnn5").unwrap().parameter_count(), 1_727_588);
    }

    #[test]
    fn layer_counts_and_bands() {
        let xs = Architecture::builtin("lenetxs").unwrap();
        assert_eq!((xs.layers.len(), xs.split), (11, SplitBands { a_end: 2, b_end: 4 }));
        let l5 = Architecture::builtin("lenet5").unwrap();
        assert_eq!((l5.layers.len(), l5.split), (12, SplitBands { a_end: 2, b_end: 9 }));
        let c5 = Architecture::builtin("cnn5").unwrap();
        assert_eq!((c5.layers.len(), c5.split), (26, SplitBands { a_end: 2, b_end: 4 }));
        assert!(Architecture::builtin("resnet").is_err());
    }

    #[test]
    fn output_shapes_follow_tables() {
        let m = Architecture::builtin("lenetxs").unwrap().random_model(1).unwrap();
        let shapes = m.shapes().unwrap();
        assert_eq!(shapes[1], vec![3, 24, 24]);
        assert_eq!(shapes[4], vec![6, 8, 8]);
        assert_eq!(shapes[8], vec![96]);
        assert_eq!(shapes[11], vec![10]);
        let m = Architecture::builtin("cnn5").unwrap().random_model(1).unwrap();
        let shapes = m.shapes().unwrap();
        assert_eq!(shapes[20], vec![512, 1, 1]);
        assert_eq!(shapes[26], vec![100]);
    }
}
