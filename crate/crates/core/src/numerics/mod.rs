//! Deterministic Q16.16 arithmetic, tensors and neural-network layers.
//!
//! Every party recomputes activations with this module, so all results are
//! bit-exact across hosts: integer arithmetic only, fixed rounding rules, and
//! table-driven transcendental functions.

mod activation;
mod fixed;
mod layers;
mod model;
mod tables;
mod tensor;

pub use activation::{fx_ln, fx_softmax};
pub use fixed::{floor_div, isqrt_u128, mean, sqrt_q32, FixedScalar, FRAC_BITS, ONE_RAW};
pub use layers::{layer_forward, Layer, LayerKind};
pub use model::{fold_batchnorm, Model, SplitBands, BATCHNORM_EPS, MODEL_MAGIC, Q_FORMAT};
pub use tensor::{squared_distance, FixedTensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumericError {
    #[error("fixed-point overflow")]
    Overflow,
    #[error("division by zero")]
    DivisionByZero,
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("missing or misshapen weights for {0} layer")]
    MissingWeights(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty input")]
    Empty,
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for NumericError {
    fn from(e: std::io::Error) -> Self {
        NumericError::Io(e.to_string())
    }
}
