//! Model owner (P1).

use rand_chacha::ChaCha20Rng;

use super::adversary::Adversary;
use super::config::{AliceInputs, RunConfig};
use super::scheduler::{Actor, Outgoing};
use super::setup::{commitment_root, DataRecord};
use super::{coin_seed, party_rng, Abort, AbortCause, Body, Message, PartyId, Stage};
use crate::audit::{
    cnczk_challenge, cnczk_verify, cp_challenge, cp_verify, weights_root, AuditError, Challenge, CnczkProof,
    CnczkProver, CnczkPublic, CpResponse, TraceCommitment, Variant, TRANSPARENT_BACKEND,
};
use crate::commitments::{commit, CommitParams, Commitment, Randomness};
use crate::model_split::full_trace;
use crate::numerics::{FixedScalar, FixedTensor, LayerKind, Model};
use crate::scoring::SubScoreP1;
use crate::selection::{coin_flip_seed, CoinShare, RepresentativeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    DataCommitments,
    CoinReveal,
    Indices,
    CpResponses,
    BlockB,
    BProof,
    CChallenge,
    Score,
    Stalled,
    Done,
}

pub struct Alice {
    pp: CommitParams,
    config: RunConfig,
    inputs: AliceInputs,
    phase: Phase,
    rng: ChaCha20Rng,
    r_a: Randomness,
    r_c: Randomness,
    coin: Option<(Commitment, CoinShare)>,
    bob_coin: Option<Commitment>,
    com_x: Vec<Commitment>,
    com_y: Vec<Commitment>,
    rep: Option<RepresentativeSet>,
    challenge: Vec<usize>,
    com_act: Option<Vec<Commitment>>,
    a_b: Vec<FixedTensor>,
    b_trace: Option<TraceCommitment>,
    b_challenge: Option<Challenge>,
    c_prover: Option<CnczkProver>,
    predictions: Vec<FixedTensor>,
    r_pred: Vec<Randomness>,
    phi: Option<FixedScalar>,
}

/// Shifts the first weight of the first parameterised layer by one ulp.
pub(crate) fn tamper_model(model: &mut Model) {
    if let Some(layer) = model.layers.iter_mut().find(|l| !l.weights.is_empty()) {
        let w = &mut layer.weights[0].data_mut()[0];
        *w = FixedScalar::from_raw(w.raw().wrapping_add(1));
    }
}

/// Shifts the first entry of a tensor by one ulp.
pub(crate) fn tamper_tensor(t: &mut FixedTensor) {
    if let Some(v) = t.data_mut().first_mut() {
        *v = FixedScalar::from_raw(v.raw().wrapping_add(1));
    }
}

pub(crate) fn tamper_proof(proof: &mut CnczkProof) {
    if let Some(t) = proof.transitions.first_mut() {
        tamper_tensor(&mut t.output);
    } else if let Some(i) = proof.inputs.first_mut() {
        tamper_tensor(&mut i.x);
    }
}

fn flip(r: &mut Randomness) {
    r.0 .0[0] ^= 1;
}

impl Alice {
    pub fn new(inputs: AliceInputs, config: RunConfig) -> Result<Self, Abort> {
        let pp = config
            .commit_params()
            .map_err(|e| Abort::new(PartyId::P1, Stage::Setup, AbortCause::Setup, e.to_string()))?;
        let rng = party_rng(inputs.seed, "commit");
        Ok(Self {
            pp,
            config,
            inputs,
            phase: Phase::DataCommitments,
            rng,
            r_a: Randomness::default(),
            r_c: Randomness::default(),
            coin: None,
            bob_coin: None,
            com_x: Vec::new(),
            com_y: Vec::new(),
            rep: None,
            challenge: Vec::new(),
            com_act: None,
            a_b: Vec::new(),
            b_trace: None,
            b_challenge: None,
            c_prover: None,
            predictions: Vec::new(),
            r_pred: Vec::new(),
            phi: None,
        })
    }

    pub fn phi(&self) -> Option<FixedScalar> {
        self.phi
    }

    fn stage_now(&self) -> Stage {
        match self.phase {
            Phase::DataCommitments | Phase::CoinReveal => Stage::Commit,
            Phase::Indices | Phase::CpResponses => Stage::Select,
            Phase::BlockB | Phase::BProof | Phase::CChallenge | Phase::Stalled => Stage::Infer,
            Phase::Score => Stage::Score,
            Phase::Done => Stage::Done,
        }
    }

    fn abort(&self, cause: AbortCause, reason: impl Into<String>) -> Abort {
        Abort::new(PartyId::P1, self.stage_now(), cause, reason)
    }

    fn is(&self, a: Adversary) -> bool {
        self.inputs.adversary == Some(a)
    }

    fn k(&self) -> usize {
        self.config.k
    }

    fn on_data_commitments(
        &mut self,
        com_x: Vec<Commitment>,
        com_y: Vec<Commitment>,
        coin: Option<Commitment>,
        record: DataRecord,
    ) -> Result<Vec<Outgoing>, Abort> {
        if !record.verify(&self.config.authority) {
            return Err(self.abort(AbortCause::Setup, "data authority signature does not verify"));
        }
        let body = &record.body;
        if com_x.len() != body.n || com_y.len() != body.n {
            return Err(self.abort(
                AbortCause::Malformed,
                "commitment count differs from the attested dataset",
            ));
        }
        if commitment_root(&self.pp, &com_x) != body.com_x_root || commitment_root(&self.pp, &com_y) != body.com_y_root
        {
            return Err(self.abort(
                AbortCause::CommitmentFailure,
                "commitments differ from the registered dataset",
            ));
        }
        let model = &self.inputs.model;
        let out_len: usize = model.c.output_shape().map(|s| s.iter().product()).unwrap_or(0);
        if body.feature_shape != model.a.input_shape || body.label_arity != out_len {
            return Err(self.abort(AbortCause::Setup, "dataset shape does not fit the model"));
        }
        if let Err(e) = self.config.validate(body.n) {
            return Err(self.abort(AbortCause::Setup, e.to_string()));
        }
        self.com_x = com_x;
        self.com_y = com_y;
        match (self.coin, coin) {
            (None, _) => {
                self.phase = Phase::Indices;
                Ok(vec![])
            }
            (Some((_, share)), Some(c)) => {
                self.bob_coin = Some(c);
                self.phase = Phase::CoinReveal;
                Ok(vec![Outgoing::new(PartyId::P2, &Body::CoinReveal { share })])
            }
            (Some(_), None) => Err(self.abort(AbortCause::Malformed, "missing coin-flip commitment")),
        }
    }

    fn on_coin_reveal(&mut self, share: CoinShare) -> Result<Vec<Outgoing>, Abort> {
        let (mine_com, mine) = self.coin.expect("coin committed at start");
        let theirs = self.bob_coin.expect("stored with the data commitments");
        coin_flip_seed(&self.pp, (&mine_com, &mine), (&theirs, &share))
            .map_err(|e| self.abort(AbortCause::CommitmentFailure, e.to_string()))?;
        self.phase = Phase::Indices;
        Ok(vec![])
    }

    fn on_indices(&mut self, indices: Vec<usize>) -> Result<Vec<Outgoing>, Abort> {
        let n = self.com_x.len();
        if indices.len() != self.k() {
            return Err(self.abort(
                AbortCause::Malformed,
                format!("{} indices for k = {}", indices.len(), self.k()),
            ));
        }
        let rep = RepresentativeSet::new(indices, n).map_err(|e| self.abort(AbortCause::Malformed, e.to_string()))?;
        let mut rng = party_rng(self.inputs.seed, "cp-challenge");
        let mut challenge = cp_challenge(&mut rng, n, self.config.num_challenges)
            .map_err(|e| self.abort(AbortCause::Malformed, e.to_string()))?;
        if self.is(Adversary::AliceShortChallenge) {
            challenge.pop();
        }
        self.rep = Some(rep);
        self.challenge = challenge.clone();
        self.phase = Phase::CpResponses;
        Ok(vec![Outgoing::new(
            PartyId::P2,
            &Body::CpChallenge { indices: challenge },
        )])
    }

    fn on_cp_responses(&mut self, backend: String, responses: Vec<CpResponse>) -> Result<Vec<Outgoing>, Abort> {
        if backend != TRANSPARENT_BACKEND {
            return Err(self.abort(AbortCause::Malformed, format!("unknown proof backend `{backend}`")));
        }
        let rep = self.rep.clone().expect("indices received");
        let verdict = cp_verify(
            &self.pp,
            &self.com_x,
            &rep,
            self.config.d,
            self.config.delta,
            &self.challenge,
            &responses,
        )
        .map_err(|e| match e {
            AuditError::CommitmentMismatch { .. } => self.abort(AbortCause::CommitmentFailure, e.to_string()),
            _ => self.abort(AbortCause::Malformed, e.to_string()),
        })?;
        if !verdict.accepted {
            return Err(self.abort(
                AbortCause::CpShortfall,
                format!("{} of {} challenges failed", verdict.failures, self.challenge.len()),
            ));
        }
        if self.is(Adversary::AliceEarlyTermination) {
            self.phase = Phase::Stalled;
            return Ok(vec![]);
        }
        let mut theta_a = self.inputs.model.a.clone();
        if self.is(Adversary::AliceBadDealerWeights) {
            tamper_model(&mut theta_a);
        }
        let com_x = rep.indices.iter().map(|&i| self.com_x[i]).collect();
        self.phase = Phase::BlockB;
        Ok(vec![Outgoing::new(
            PartyId::Dealer,
            &Body::InferenceInputP1 {
                theta_a,
                r_a: self.r_a,
                com_x,
            },
        )])
    }

    fn on_block_b(&mut self, a_b: Vec<FixedTensor>, trace: TraceCommitment) -> Result<Vec<Outgoing>, Abort> {
        if self.com_act.is_none() {
            return Err(self.abort(
                AbortCause::Malformed,
                "block-B outputs before the activation commitments",
            ));
        }
        if a_b.len() != self.k() || trace.variant != Variant::HiddenData {
            return Err(self.abort(
                AbortCause::Malformed,
                "block-B outputs do not match the representative set",
            ));
        }
        let layers = self.inputs.model.b.layers.len();
        let (m, s) = self.config.audit_b.resolve(self.k(), layers);
        let mut rng = party_rng(self.inputs.seed, "audit-b");
        let challenge = cnczk_challenge(&mut rng, self.k(), layers, m, s)
            .map_err(|e| self.abort(AbortCause::Malformed, e.to_string()))?;
        self.a_b = a_b;
        self.b_trace = Some(trace);
        self.b_challenge = Some(challenge.clone());
        self.phase = Phase::BProof;
        Ok(vec![Outgoing::new(PartyId::P2, &Body::AuditChallenge { challenge })])
    }

    fn on_b_proof(&mut self, proof: CnczkProof) -> Result<Vec<Outgoing>, Abort> {
        let theta_b = &self.inputs.model.b;
        let kinds: Vec<LayerKind> = theta_b.layers.iter().map(|l| l.kind.clone()).collect();
        let com_act = self.com_act.as_deref().expect("checked on block-B outputs");
        let public = CnczkPublic {
            variant: Variant::HiddenData,
            points: self.k(),
            layer_kinds: &kinds,
            layers: Some(&theta_b.layers),
            inputs: None,
            outputs: Some(&self.a_b),
            input_commitments: Some(com_act),
            output_commitments: None,
        };
        let trace = self.b_trace.as_ref().expect("stored with block-B outputs");
        let challenge = self.b_challenge.as_ref().expect("issued");
        cnczk_verify(&self.pp, &public, trace, challenge, &proof)
            .map_err(|e| self.abort(AbortCause::ProofFailure, format!("π_B rejected: {e}")))?;

        let c = &self.inputs.model.c;
        let fail = |e: String| self.abort(AbortCause::Malformed, format!("block C: {e}"));
        let trace = full_trace(c, &self.a_b).map_err(|e| fail(e.to_string()))?;
        let predictions = trace.outputs().to_vec();
        let (com_y, r_pred): (Vec<Commitment>, Vec<Randomness>) = predictions
            .iter()
            .map(|y| commit(&self.pp, &y.to_bytes(), &mut self.rng))
            .unzip();
        let prover = CnczkProver::from_trace(&self.pp, Variant::HiddenWeights, c.layers.clone(), trace, None)
            .map_err(|e| self.abort(AbortCause::Malformed, e.to_string()))?
            .with_output_randomness(r_pred.clone());
        let trace = prover.commitment();
        let mut r_c = self.r_c;
        if self.is(Adversary::AliceBadComCOpening) {
            flip(&mut r_c);
        }
        self.predictions = predictions;
        self.r_pred = r_pred;
        self.c_prover = Some(prover);
        self.phase = Phase::CChallenge;
        Ok(vec![Outgoing::new(
            PartyId::P2,
            &Body::BlockCCommitments { com_y, trace, r_c },
        )])
    }

    fn on_c_challenge(&mut self, challenge: Challenge) -> Result<Vec<Outgoing>, Abort> {
        let prover = self.c_prover.as_ref().expect("committed");
        let in_range =
            challenge.points.iter().all(|&i| i < self.k()) && challenge.points.len() == challenge.layers.len();
        if !in_range {
            return Err(self.abort(AbortCause::Malformed, "audit challenge out of range"));
        }
        let mut proof = prover
            .prove(&challenge)
            .map_err(|e| self.abort(AbortCause::Malformed, e.to_string()))?;
        if self.is(Adversary::AliceForgedCProof) {
            tamper_proof(&mut proof);
        }
        let rep = self.rep.clone().expect("indices received");
        let mut predictions = self.predictions.clone();
        if self.is(Adversary::AliceSubscoreBadPrediction) {
            tamper_tensor(&mut predictions[0]);
        }
        let input = SubScoreP1 {
            predictions,
            prediction_randomness: self.r_pred.clone(),
            label_commitments: rep.indices.iter().map(|&i| self.com_y[i]).collect(),
            feature_commitments: self.com_x.clone(),
        };
        self.phase = Phase::Score;
        Ok(vec![
            Outgoing::new(PartyId::P2, &Body::AuditProof { proof }),
            Outgoing::new(
                PartyId::Dealer,
                &Body::SubScoreInputP1 {
                    rep: rep.indices,
                    input,
                },
            ),
        ])
    }
}

impl Actor for Alice {
    fn id(&self) -> PartyId {
        PartyId::P1
    }

    fn stage(&self) -> Stage {
        self.stage_now()
    }

    fn start(&mut self) -> Result<Vec<Outgoing>, Abort> {
        if !self.inputs.record.verify(&self.config.authority) || !self.inputs.record.matches_split(&self.inputs.model) {
            return Err(Abort::new(
                PartyId::P1,
                Stage::Setup,
                AbortCause::Setup,
                "model record does not cover this split",
            ));
        }
        let model = &self.inputs.model;
        let (com_a, r_a) = commit(&self.pp, &model.a.to_bytes(None), &mut self.rng);
        let root = weights_root(&self.pp, &model.c.layers)
            .map_err(|e| Abort::new(PartyId::P1, Stage::Setup, AbortCause::Setup, e.to_string()))?;
        let (com_c, r_c) = commit(&self.pp, root.as_bytes(), &mut self.rng);
        self.r_a = r_a;
        self.r_c = r_c;
        self.coin = self.config.scoring.projection.map(|_| {
            let share = CoinShare::derive(&coin_seed(self.inputs.seed));
            (share.commitment(&self.pp), share)
        });
        Ok(vec![
            Outgoing::new(
                PartyId::P2,
                &Body::PublicWeights {
                    theta_b: model.b.clone(),
                },
            ),
            Outgoing::new(
                PartyId::P2,
                &Body::ModelCommitments {
                    com_a,
                    com_c,
                    coin: self.coin.map(|c| c.0),
                    record: self.inputs.record.clone(),
                },
            ),
        ])
    }

    fn on_message(&mut self, msg: &Message) -> Result<Vec<Outgoing>, Abort> {
        let body = msg
            .decode()
            .map_err(|e| self.abort(AbortCause::Malformed, e.to_string()))?;
        let from = msg.sender;
        match (self.phase, from, body) {
            (
                Phase::DataCommitments,
                PartyId::P2,
                Body::DataCommitments {
                    com_x,
                    com_y,
                    coin,
                    record,
                },
            ) => self.on_data_commitments(com_x, com_y, coin, record),
            (Phase::CoinReveal, PartyId::P2, Body::CoinReveal { share }) => self.on_coin_reveal(share),
            (Phase::Indices, PartyId::P2, Body::RepIndices { indices }) => self.on_indices(indices),
            (Phase::CpResponses, PartyId::P2, Body::CpResponses { backend, responses }) => {
                self.on_cp_responses(backend, responses)
            }
            (Phase::BlockB, PartyId::Dealer, Body::ActivationCommitments { com_a }) if self.com_act.is_none() => {
                if com_a.len() != self.k() {
                    return Err(self.abort(AbortCause::Malformed, "activation commitment count differs from k"));
                }
                self.com_act = Some(com_a);
                Ok(vec![])
            }
            (Phase::BlockB, PartyId::P2, Body::BlockBOutputs { a_b, trace }) => self.on_block_b(a_b, trace),
            (Phase::BProof, PartyId::P2, Body::AuditProof { proof }) => self.on_b_proof(proof),
            (Phase::CChallenge, PartyId::P2, Body::AuditChallenge { challenge }) => self.on_c_challenge(challenge),
            (Phase::Score, PartyId::Dealer, Body::Score { phi }) => {
                self.phi = Some(phi);
                self.phase = Phase::Done;
                Ok(vec![])
            }
            (_, from, body) => Err(self.abort(
                AbortCause::Malformed,
                format!("unexpected {} from {from} at seq {}", body.variant_name(), msg.seq),
            )),
        }
    }
}
