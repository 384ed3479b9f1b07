//! The ideal scoring functionality, run monolithically by one trusted party.

use rayon::prelude::*;

use super::config::{AliceInputs, BobInputs, RunConfig};
use super::{coin_seed, party_rng, Abort, AbortCause, PartyId, Stage};
use crate::audit::{cp_challenge, cp_required_successes};
use crate::scoring::{score_components, select_representatives, ProjectionConfig, ScoreReport};
use crate::selection::{coin_flip_seed, nearest_representative, percentile_sq_distance, squared_threshold, CoinShare};

fn abort(stage: Stage, cause: AbortCause, reason: impl Into<String>) -> Abort {
    Abort::new(PartyId::Dealer, stage, cause, reason)
}

/// Selects `D_R` as P2 would, runs the challenge check with P1's challenge
/// stream, then infers block by block and scores. Adversary flags are ignored.
pub fn f_score_reference(alice: &AliceInputs, bob: &BobInputs, config: &RunConfig) -> Result<ScoreReport, Abort> {
    let pp = config
        .commit_params()
        .map_err(|e| abort(Stage::Setup, AbortCause::Setup, e.to_string()))?;
    let xs = &bob.dataset.xs;
    let n = xs.len();
    config
        .validate(n)
        .map_err(|e| abort(Stage::Setup, AbortCause::Setup, e.to_string()))?;

    // Steps 1-2: joint seed and the representative set.
    let projection = match config.scoring.projection {
        None => None,
        Some(p) => {
            let a = CoinShare::derive(&coin_seed(alice.seed));
            let b = CoinShare::derive(&coin_seed(bob.seed));
            let seed = coin_flip_seed(&pp, (&a.commitment(&pp), &a), (&b.commitment(&pp), &b))
                .map_err(|e| abort(Stage::Commit, AbortCause::CommitmentFailure, e.to_string()))?;
            Some(ProjectionConfig {
                dim: p.dim,
                seed: Some(seed),
            })
        }
    };
    let rep = select_representatives(xs, config.k, projection.as_ref())
        .map_err(|e| abort(Stage::Select, AbortCause::Setup, e.to_string()))?;
    let threshold = squared_threshold(config.d);
    if config.k < n {
        let d_prime = percentile_sq_distance(xs, &rep, config.delta)
            .map_err(|e| abort(Stage::Select, AbortCause::Setup, e.to_string()))?;
        if d_prime > threshold {
            return Err(abort(Stage::Select, AbortCause::DPrimeCheck, "d' exceeds d"));
        }
    }

    // Step 3: challenge check.
    let mut rng = party_rng(alice.seed, "cp-challenge");
    let challenge = cp_challenge(&mut rng, n, config.num_challenges)
        .map_err(|e| abort(Stage::Select, AbortCause::Malformed, e.to_string()))?;
    let successes = challenge
        .iter()
        .filter(|&&i| nearest_representative(xs, &rep, &xs[i]).is_some_and(|(_, sq)| sq < threshold))
        .count();
    if successes < cp_required_successes(challenge.len(), config.delta) {
        return Err(abort(
            Stage::Select,
            AbortCause::CpShortfall,
            format!(
                "{} of {} challenges failed",
                challenge.len() - successes,
                challenge.len()
            ),
        ));
    }

    // Steps 4-6: block-wise inference on D_R.
    let model = &alice.model;
    let logits = rep
        .indices
        .par_iter()
        .map(|&i| {
            let a = model.a.forward(&xs[i])?;
            let b = model.b.forward(&a)?;
            model.c.forward(&b)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| abort(Stage::Infer, AbortCause::DealerAbort, e.to_string()))?;

    // Step 7: score.
    let labels: Vec<_> = rep.indices.iter().map(|&i| bob.dataset.ys[i].clone()).collect();
    score_components(&logits, &labels, xs, &rep, &config.scoring)
        .map_err(|e| abort(Stage::Score, AbortCause::DealerAbort, e.to_string()))
}
