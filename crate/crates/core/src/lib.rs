//! Privacy-preserving dataset scoring between a model owner and a data owner.
//!
//! The crate simulates the full two-party workflow: hash commitments and
//! Merkle trees, representative-set selection with a challenge audit,
//! split-model inference verified by cut-and-choose audits over committed
//! activation traces, and the final scoring step. Ideal two-party
//! functionalities are played by a trusted dealer.

pub mod audit;
pub mod commitments;
pub mod fixtures;
pub mod market;
pub mod model_split;
pub mod numerics;
pub mod protocol;
pub mod scoring;
pub mod selection;

pub use numerics::{FixedScalar, FixedTensor, Layer, LayerKind, Model};
