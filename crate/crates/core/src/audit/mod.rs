//! Audits: the representativeness challenge protocol, cut-and-choose
//! inference audits, and the detection bound that sizes them.

mod cnczk;
mod cp;
mod detection;

use thiserror::Error;

pub use cnczk::{
    cnczk_challenge, cnczk_commit_trace, cnczk_prove, cnczk_verify, tensor_root, weights_root, Challenge, CnczkProof,
    CnczkProver, CnczkPublic, CnczkRejection, InputProof, LayerOpening, TraceCommitment, TransitionProof, Variant,
    TRANSPARENT_BACKEND,
};
pub use cp::{
    commit_points, cp_challenge, cp_prove, cp_required_successes, cp_run, cp_sample_size, cp_verify, CpResponse, CpRun,
    CpVerdict, PointOpening,
};
pub use detection::{
    corrupted_points, cp_rejection_probability, detection_probability, detection_probability_exact, plan_audit,
    simulate_detection, AuditPlan,
};

use crate::commitments::CommitError;
use crate::numerics::NumericError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error("invalid audit plan: {0}")]
    PlanInvalid(String),
    #[error("target detection probability is unachievable")]
    Unachievable,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("opening of commitment {index} failed")]
    CommitmentMismatch { index: usize },
    #[error("malformed audit message: {0}")]
    Malformed(String),
    #[error(transparent)]
    Commit(#[from] CommitError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}
