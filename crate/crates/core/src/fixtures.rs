//! Synthetic fixtures: Gaussian blobs, digit-like images, random-weight
//! models, and complete protocol inputs built from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::commitments::setup_com;
use crate::model_split::{split_model, Architecture, SplitModel};
use crate::numerics::{sqrt_q32, FixedScalar, FixedTensor, LayerKind, Model, SplitBands};
use crate::protocol::{
    coin_seed, issue_data_record, issue_model_record, AliceInputs, BobInputs, ProtocolError, RunConfig,
};
use crate::scoring::{select_representatives, ProjectionConfig};
use crate::selection::{coin_flip_seed, nearest_sq_distances, CoinShare, Dataset, RepresentativeSet};

/// `n` points in the plane around `classes` centres on a circle of radius 3.
pub fn gaussian_blobs(n: usize, classes: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes.max(1);
        let angle = std::f64::consts::TAU * c as f64 / classes.max(1) as f64;
        let (cx, cy) = (3.0 * angle.cos(), 3.0 * angle.sin());
        let p = [cx + normal(&mut rng) * 0.6, cy + normal(&mut rng) * 0.6];
        xs.push(FixedTensor::from_f64(vec![2], &p).expect("two coordinates"));
        labels.push(c);
    }
    Dataset::from_classes(xs, &labels, classes).expect("consistent shapes")
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    // Box-Muller.
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

const GLYPHS: [[&str; 7]; 10] = [
    [" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "],
    ["  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "],
    [" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"],
    ["#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "],
    ["   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "],
    ["#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "],
    ["  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "],
    ["#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "],
    [" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "],
    [" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "],
];

/// Digit-like images of shape `[channels, side, side]`: a 5×7 glyph scaled
/// to the frame, jittered by up to one glyph pixel, plus uniform noise.
/// Labels cycle through `classes`; the glyph shows the label mod 10.
pub fn digit_images(n: usize, channels: usize, side: usize, classes: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let scale = (side as f64 * 0.8 / 7.0).max(1.0 / 7.0);
    for i in 0..n {
        let label = i % classes;
        let glyph = &GLYPHS[label % 10];
        let dx = rng.gen_range(-1.0..=1.0) * scale;
        let dy = rng.gen_range(-1.0..=1.0) * scale;
        let off_x = (side as f64 - 5.0 * scale) / 2.0 + dx;
        let off_y = (side as f64 - 7.0 * scale) / 2.0 + dy;
        let mut data = Vec::with_capacity(channels * side * side);
        for ch in 0..channels {
            let gain = 1.0 - 0.2 * ch as f64;
            for r in 0..side {
                for c in 0..side {
                    let gy = ((r as f64 + 0.5 - off_y) / scale).floor();
                    let gx = ((c as f64 + 0.5 - off_x) / scale).floor();
                    let on = (0.0..7.0).contains(&gy)
                        && (0.0..5.0).contains(&gx)
                        && glyph[gy as usize].as_bytes()[gx as usize] == b'#';
                    let v = if on { gain } else { 0.0 } + rng.gen_range(0.0..0.1);
                    data.push(v);
                }
            }
        }
        xs.push(FixedTensor::from_f64(vec![channels, side, side], &data).expect("length matches shape"));
        labels.push(label);
    }
    Dataset::from_classes(xs, &labels, classes).expect("consistent shapes")
}

/// `2 → 8 → 8 → 3` perceptron for the blob fixture.
pub fn toy_architecture() -> Architecture {
    let lin = |i, o| LayerKind::Linear {
        in_features: i,
        out_features: o,
    };
    Architecture {
        name: "toy".into(),
        input_shape: vec![2],
        layers: vec![lin(2, 8), LayerKind::Relu, lin(8, 8), LayerKind::Relu, lin(8, 3)],
        split: SplitBands { a_end: 2, b_end: 4 },
    }
}

pub fn architecture(name: &str) -> Result<Architecture, ProtocolError> {
    match name {
        "toy" => Ok(toy_architecture()),
        other => Architecture::builtin(other).map_err(|e| ProtocolError::Config(e.to_string())),
    }
}

/// Dataset matching an architecture's input: blobs for `toy`, digit images
/// otherwise.
pub fn dataset_for(arch: &Architecture, n: usize, seed: u64) -> Dataset {
    match arch.input_shape.as_slice() {
        [2] => gaussian_blobs(n, 3, seed),
        [c, h, _] => {
            let classes = arch
                .layers
                .iter()
                .rev()
                .find_map(|l| match *l {
                    LayerKind::Linear { out_features, .. } => Some(out_features),
                    _ => None,
                })
                .unwrap_or(10);
            digit_images(n, *c, *h, classes, seed)
        }
        _ => gaussian_blobs(n, 3, seed),
    }
}

/// Smallest `d` that strictly covers every point from `rep`.
pub fn covering_d(xs: &[FixedTensor], rep: &RepresentativeSet) -> FixedScalar {
    let max = nearest_sq_distances(xs, rep).into_iter().max().unwrap_or(0);
    let root = sqrt_q32(max).unwrap_or(FixedScalar::from_raw(i32::MAX - 2));
    FixedScalar::from_raw(root.raw().saturating_add(2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub arch: String,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// JL dimension for selection; `None` selects on raw features.
    #[serde(default)]
    pub projection_dim: Option<usize>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            arch: "toy".into(),
            n: 200,
            k: 20,
            seed: 1,
            projection_dim: None,
        }
    }
}

/// Everything one protocol run needs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fixture {
    pub spec: FixtureSpec,
    pub model: Model,
    pub split: SplitModel,
    pub dataset: Dataset,
    pub alice: AliceInputs,
    pub bob: BobInputs,
    pub config: RunConfig,
}

impl Fixture {
    /// Selection seed the honest parties will agree on, if projecting.
    pub fn projection(&self) -> Option<ProjectionConfig> {
        projection_for(&self.config, self.alice.seed, self.bob.seed)
    }
}

fn projection_for(config: &RunConfig, alice_seed: u64, bob_seed: u64) -> Option<ProjectionConfig> {
    let p = config.scoring.projection?;
    let pp = config.commit_params().ok()?;
    let a = CoinShare::derive(&coin_seed(alice_seed));
    let b = CoinShare::derive(&coin_seed(bob_seed));
    let seed = coin_flip_seed(&pp, (&a.commitment(&pp), &a), (&b.commitment(&pp), &b)).ok()?;
    Some(ProjectionConfig {
        dim: p.dim,
        seed: Some(seed),
    })
}

/// A model with its split points, as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub split: SplitBands,
    pub model: Model,
}

/// Random model, dataset, split and records; `d` is calibrated so that the
/// honest representative set covers every point.
pub fn build_fixture(spec: &FixtureSpec) -> Result<Fixture, ProtocolError> {
    let arch = architecture(&spec.arch)?;
    let model = arch
        .random_model(spec.seed)
        .map_err(|e| ProtocolError::Config(e.to_string()))?;
    let dataset = dataset_for(&arch, spec.n, spec.seed ^ 0x5eed);
    assemble_fixture(spec.clone(), model, arch.split, dataset, None)
}

/// Splits `model` at `bands` and issues records for it and `dataset`.
/// Without an explicit `config`, the defaults are used with `spec.k` and a
/// calibrated `d`; `spec.n` is taken from the dataset.
pub fn assemble_fixture(
    mut spec: FixtureSpec,
    model: Model,
    bands: SplitBands,
    dataset: Dataset,
    config: Option<RunConfig>,
) -> Result<Fixture, ProtocolError> {
    let cfg = |e: String| ProtocolError::Config(e);
    spec.n = dataset.len();
    let split = split_model(&model, bands.b_end, &spec.seed.to_le_bytes()).map_err(|e| cfg(e.to_string()))?;
    if split.bands != bands {
        return Err(cfg(format!("model cannot be split at {bands:?}")));
    }
    let alice_seed = spec.seed.wrapping_mul(2).wrapping_add(11);
    let bob_seed = spec.seed.wrapping_mul(2).wrapping_add(12);

    let config = match config {
        Some(c) => {
            spec.k = c.k;
            spec.projection_dim = c.scoring.projection.map(|p| p.dim);
            c
        }
        None => {
            let mut config = RunConfig {
                k: spec.k,
                dealer_seed: spec.seed ^ 0xdea1,
                ..RunConfig::default()
            };
            config.scoring.projection = spec.projection_dim.map(|dim| ProjectionConfig { dim, seed: None });
            config.num_challenges = config.num_challenges.min(spec.n);
            let projection = projection_for(&config, alice_seed, bob_seed);
            let rep = select_representatives(&dataset.xs, spec.k.min(spec.n), projection.as_ref())
                .map_err(|e| cfg(e.to_string()))?;
            config.d = covering_d(&dataset.xs, &rep);
            config
        }
    };
    config.validate(dataset.len())?;

    let key = config.authority;
    let pp = setup_com(config.security_level).map_err(|e| cfg(e.to_string()))?;
    let model_record = issue_model_record(&key, &model, &split)?;
    let data_record = issue_data_record(&key, &pp, &dataset, bob_seed)?;
    Ok(Fixture {
        spec,
        alice: AliceInputs::new(split.clone(), model_record, alice_seed),
        bob: BobInputs::new(dataset.clone(), data_record, bob_seed),
        model,
        split,
        dataset,
        config,
    })
}
