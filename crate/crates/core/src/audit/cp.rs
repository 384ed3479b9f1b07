//! Challenge protocol for representative-set audits.
//!
//! With the transparent backend a proof for challenged index `i` opens
//! `com_i` and the named witness `com_j` (`j ∈ I_R`); the verifier checks
//! both openings and recomputes `‖x_j − x_i‖ ≤ d`.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AuditError;
use crate::commitments::{commit, open, CommitParams, Commitment, Randomness};
use crate::numerics::{squared_distance, FixedScalar, FixedTensor};
use crate::selection::{nearest_representative, squared_threshold, RepresentativeSet};

/// Opening of a committed point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointOpening {
    pub index: usize,
    pub x: FixedTensor,
    pub r: Randomness,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CpResponse {
    Proof { point: PointOpening, witness: PointOpening },
    Fail { index: usize },
}

impl CpResponse {
    pub fn index(&self) -> usize {
        match self {
            CpResponse::Proof { point, .. } => point.index,
            CpResponse::Fail { index } => *index,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpVerdict {
    pub accepted: bool,
    pub successes: usize,
    pub failures: usize,
}

/// Minimum number of successful proofs: `ceil((1 − δ)·|I|)`.
pub fn cp_required_successes(num_challenges: usize, delta: f64) -> usize {
    (((1.0 - delta) * num_challenges as f64) - 1e-9).ceil().max(0.0) as usize
}

/// `ceil(c · ln n / δ)`.
pub fn cp_sample_size(n: f64, delta: f64, c: f64) -> Result<usize, AuditError> {
    if !(n >= 2.0 && delta > 0.0 && delta <= 1.0 && c >= 1.0) {
        return Err(AuditError::Domain(format!(
            "need n ≥ 2, δ ∈ (0,1], c ≥ 1; got n={n}, δ={delta}, c={c}"
        )));
    }
    Ok((c * n.ln() / delta - 1e-9).ceil() as usize)
}

/// Per-point commitments `com_i = Commit(pp, enc(x_i))`.
pub fn commit_points<R: Rng + ?Sized>(
    pp: &CommitParams,
    xs: &[FixedTensor],
    rng: &mut R,
) -> (Vec<Commitment>, Vec<Randomness>) {
    xs.iter().map(|x| commit(pp, &x.to_bytes(), rng)).unzip()
}

/// `I ⊂ [n]`, uniform without replacement.
pub fn cp_challenge<R: Rng + ?Sized>(rng: &mut R, n: usize, num_challenges: usize) -> Result<Vec<usize>, AuditError> {
    if num_challenges > n {
        return Err(AuditError::Domain(format!(
            "{num_challenges} challenges exceed {n} points"
        )));
    }
    Ok(sample(rng, n, num_challenges).into_vec())
}

/// Honest prover: proves every challenged point whose nearest representative
/// lies strictly within `d`, and answers `fail` otherwise.
pub fn cp_prove(
    xs: &[FixedTensor],
    randomness: &[Randomness],
    rep: &RepresentativeSet,
    d: FixedScalar,
    challenge: &[usize],
) -> Vec<CpResponse> {
    let threshold = squared_threshold(d);
    challenge
        .iter()
        .map(|&i| match nearest_representative(xs, rep, &xs[i]) {
            Some((j, sq)) if sq < threshold => CpResponse::Proof {
                point: PointOpening {
                    index: i,
                    x: xs[i].clone(),
                    r: randomness[i],
                },
                witness: PointOpening {
                    index: j,
                    x: xs[j].clone(),
                    r: randomness[j],
                },
            },
            _ => CpResponse::Fail { index: i },
        })
        .collect()
}

/// Checks one response per challenged index, in order. A bad opening aborts
/// with an error; a named witness outside `I_R` or beyond `d` counts as a
/// failed proof.
pub fn cp_verify(
    pp: &CommitParams,
    commitments: &[Commitment],
    rep: &RepresentativeSet,
    d: FixedScalar,
    delta: f64,
    challenge: &[usize],
    responses: &[CpResponse],
) -> Result<CpVerdict, AuditError> {
    if responses.len() != challenge.len() {
        return Err(AuditError::Malformed(format!(
            "{} responses for {} challenges",
            responses.len(),
            challenge.len()
        )));
    }
    let threshold = squared_threshold(d);
    let check_open = |o: &PointOpening| -> Result<(), AuditError> {
        let com = commitments
            .get(o.index)
            .ok_or(AuditError::Malformed(format!("index {} out of range", o.index)))?;
        if open(pp, com, &o.x.to_bytes(), &o.r) {
            Ok(())
        } else {
            Err(AuditError::CommitmentMismatch { index: o.index })
        }
    };
    let mut successes = 0;
    for (&i, resp) in challenge.iter().zip(responses) {
        if resp.index() != i {
            return Err(AuditError::Malformed(format!(
                "response for {} answers challenge {i}",
                resp.index()
            )));
        }
        if let CpResponse::Proof { point, witness } = resp {
            check_open(point)?;
            check_open(witness)?;
            let close =
                point.x.shape() == witness.x.shape() && squared_distance(point.x.data(), witness.x.data()) <= threshold;
            if rep.contains(witness.index) && close {
                successes += 1;
            }
        }
    }
    Ok(CpVerdict {
        accepted: successes >= cp_required_successes(challenge.len(), delta),
        successes,
        failures: challenge.len() - successes,
    })
}

/// One full CP execution against the honest prover strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpRun {
    pub challenge: Vec<usize>,
    pub responses: Vec<CpResponse>,
    pub verdict: CpVerdict,
}

#[allow(clippy::too_many_arguments)]
pub fn cp_run<R: Rng + ?Sized>(
    verifier_rng: &mut R,
    pp: &CommitParams,
    xs: &[FixedTensor],
    commitments: &[Commitment],
    randomness: &[Randomness],
    rep: &RepresentativeSet,
    d: FixedScalar,
    delta: f64,
    num_challenges: usize,
) -> Result<CpRun, AuditError> {
    let challenge = cp_challenge(verifier_rng, xs.len(), num_challenges)?;
    let responses = cp_prove(xs, randomness, rep, d, &challenge);
    let verdict = cp_verify(pp, commitments, rep, d, delta, &challenge, &responses)?;
    Ok(CpRun {
        challenge,
        responses,
        verdict,
    })
}
