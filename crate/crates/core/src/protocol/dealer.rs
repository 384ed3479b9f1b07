//! Trusted dealer executing `F_Inference` and `F_SubScore`.

use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::config::RunConfig;
use super::scheduler::{Actor, Outgoing};
use super::{party_rng, Abort, AbortCause, Body, Message, PartyId, Stage};
use crate::commitments::{commit, open, CommitParams, Commitment, Randomness};
use crate::numerics::{FixedTensor, Model};
use crate::scoring::{f_subscore, ScoreReport, SubScoreP1, SubScoreP2};
use crate::selection::RepresentativeSet;

/// Block-A activations with their fresh commitments and openings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InferenceOutput {
    pub activations: Vec<FixedTensor>,
    pub commitments: Vec<Commitment>,
    pub randomness: Vec<Randomness>,
}

/// Opens `com_A` and every `com_{x_i}` with the counterparty-supplied
/// commitments, then computes and commits `A(x_i)`.
#[allow(clippy::too_many_arguments)]
pub fn f_inference_dealer(
    pp: &CommitParams,
    theta_a: &Model,
    r_a: &Randomness,
    xs: &[FixedTensor],
    r_x: &[Randomness],
    com_a: &Commitment,
    com_x: &[Commitment],
    rng: &mut ChaCha20Rng,
) -> Result<InferenceOutput, String> {
    if !open(pp, com_a, &theta_a.to_bytes(None), r_a) {
        return Err("θ_A does not open com_A".into());
    }
    if xs.len() != com_x.len() || r_x.len() != com_x.len() {
        return Err(format!("{} features for {} commitments", xs.len(), com_x.len()));
    }
    if let Some(i) = (0..xs.len()).find(|&i| !open(pp, &com_x[i], &xs[i].to_bytes(), &r_x[i])) {
        return Err(format!("x_{i} does not open its commitment"));
    }
    let activations = xs
        .par_iter()
        .map(|x| theta_a.forward(x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("block A: {e}"))?;
    let (commitments, randomness) = activations.iter().map(|a| commit(pp, &a.to_bytes(), rng)).unzip();
    Ok(InferenceOutput {
        activations,
        commitments,
        randomness,
    })
}

pub struct Dealer {
    pp: CommitParams,
    config: RunConfig,
    rng: ChaCha20Rng,
    inference_p1: Option<(Model, Randomness, Vec<Commitment>)>,
    inference_p2: Option<(Vec<FixedTensor>, Vec<Randomness>, Commitment)>,
    inference_done: bool,
    subscore_p1: Option<(Vec<usize>, SubScoreP1)>,
    subscore_p2: Option<(Vec<usize>, SubScoreP2)>,
    report: Option<ScoreReport>,
}

impl Dealer {
    pub fn new(config: RunConfig) -> Result<Self, Abort> {
        let pp = config
            .commit_params()
            .map_err(|e| Abort::new(PartyId::Dealer, Stage::Setup, AbortCause::Setup, e.to_string()))?;
        let rng = party_rng(config.dealer_seed, "dealer");
        Ok(Self {
            pp,
            config,
            rng,
            inference_p1: None,
            inference_p2: None,
            inference_done: false,
            subscore_p1: None,
            subscore_p2: None,
            report: None,
        })
    }

    /// The full score report; only `φ` leaves the dealer.
    pub fn report(&self) -> Option<&ScoreReport> {
        self.report.as_ref()
    }

    fn abort(&self, stage: Stage, reason: impl Into<String>) -> Abort {
        Abort::new(PartyId::Dealer, stage, AbortCause::DealerAbort, reason)
    }

    fn try_inference(&mut self) -> Result<Vec<Outgoing>, Abort> {
        let (Some((theta_a, r_a, com_x)), Some((xs, r_x, com_a))) = (&self.inference_p1, &self.inference_p2) else {
            return Ok(vec![]);
        };
        let out = f_inference_dealer(&self.pp, theta_a, r_a, xs, r_x, com_a, com_x, &mut self.rng)
            .map_err(|e| Abort::new(PartyId::Dealer, Stage::Infer, AbortCause::DealerAbort, e))?;
        self.inference_done = true;
        self.inference_p1 = None;
        self.inference_p2 = None;
        Ok(vec![
            Outgoing::new(
                PartyId::P1,
                &Body::ActivationCommitments {
                    com_a: out.commitments.clone(),
                },
            ),
            Outgoing::new(
                PartyId::P2,
                &Body::Activations {
                    activations: out.activations,
                    com_a: out.commitments,
                    r_a: out.randomness,
                },
            ),
        ])
    }

    fn try_subscore(&mut self) -> Result<Vec<Outgoing>, Abort> {
        let (Some((rep1, p1)), Some((rep2, p2))) = (&self.subscore_p1, &self.subscore_p2) else {
            return Ok(vec![]);
        };
        if rep1 != rep2 {
            return Err(self.abort(Stage::Score, "parties disagree on the representative set"));
        }
        let rep = RepresentativeSet::new(rep1.clone(), p2.features.len())
            .map_err(|e| self.abort(Stage::Score, e.to_string()))?;
        if rep.k() != self.config.k {
            return Err(self.abort(Stage::Score, "representative set has the wrong size"));
        }
        let report = f_subscore(&self.pp, &self.config.scoring, &rep, p1, p2)
            .map_err(|e| self.abort(Stage::Score, e.to_string()))?;
        let phi = report.phi;
        self.report = Some(report);
        Ok(vec![
            Outgoing::new(PartyId::P1, &Body::Score { phi }),
            Outgoing::new(PartyId::P2, &Body::Score { phi }),
        ])
    }
}

impl Actor for Dealer {
    fn id(&self) -> PartyId {
        PartyId::Dealer
    }

    fn stage(&self) -> Stage {
        if self.report.is_some() {
            Stage::Done
        } else if self.inference_done {
            Stage::Score
        } else {
            Stage::Infer
        }
    }

    fn start(&mut self) -> Result<Vec<Outgoing>, Abort> {
        Ok(vec![])
    }

    fn on_message(&mut self, msg: &Message) -> Result<Vec<Outgoing>, Abort> {
        let stage = self.stage();
        let body = msg
            .decode()
            .map_err(|e| Abort::new(PartyId::Dealer, stage, AbortCause::Malformed, e.to_string()))?;
        let fresh = !self.inference_done;
        match (msg.sender, body) {
            (PartyId::P1, Body::InferenceInputP1 { theta_a, r_a, com_x }) if fresh && self.inference_p1.is_none() => {
                self.inference_p1 = Some((theta_a, r_a, com_x));
                self.try_inference()
            }
            (PartyId::P2, Body::InferenceInputP2 { xs, r_x, com_a }) if fresh && self.inference_p2.is_none() => {
                self.inference_p2 = Some((xs, r_x, com_a));
                self.try_inference()
            }
            (PartyId::P1, Body::SubScoreInputP1 { rep, input }) if !fresh && self.subscore_p1.is_none() => {
                self.subscore_p1 = Some((rep, input));
                self.try_subscore()
            }
            (PartyId::P2, Body::SubScoreInputP2 { rep, input }) if !fresh && self.subscore_p2.is_none() => {
                self.subscore_p2 = Some((rep, input));
                self.try_subscore()
            }
            (from, body) => Err(Abort::new(
                PartyId::Dealer,
                stage,
                AbortCause::Malformed,
                format!("unexpected {} from {from} at seq {}", body.variant_name(), msg.seq),
            )),
        }
    }
}
