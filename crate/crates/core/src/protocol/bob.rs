//! Data owner (P2).

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand_chacha::ChaCha20Rng;

use super::adversary::Adversary;
use super::alice::{tamper_proof, tamper_tensor};
use super::config::{BobInputs, RunConfig};
use super::scheduler::{Actor, Outgoing};
use super::setup::{commitment_root, ModelRecord};
use super::{coin_seed, party_rng, Abort, AbortCause, Body, Message, MessageKind, PartyId, Stage};
use crate::audit::{
    cnczk_challenge, cnczk_verify, cp_prove, Challenge, CnczkProver, CnczkPublic, CpResponse, TraceCommitment, Variant,
    TRANSPARENT_BACKEND,
};
use crate::commitments::{commit, open, CommitParams, Commitment, Randomness};
use crate::model_split::full_trace;
use crate::numerics::{squared_distance, FixedTensor, LayerKind, Model};
use crate::scoring::{select_representatives, ProjectionConfig, SubScoreP2};
use crate::selection::{
    coin_flip_seed, percentile_sq_distance, representativeness, squared_threshold, CoinShare, Dataset,
    RepresentativeSet,
};

/// P2's Stage-0 commitments to every `(x_i, y_i)` and their openings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BobCommitments {
    pub com_x: Vec<Commitment>,
    pub r_x: Vec<Randomness>,
    pub com_y: Vec<Commitment>,
    pub r_y: Vec<Randomness>,
}

/// Deterministic in `seed`, so the data authority can attest the same
/// commitments P2 later publishes.
pub fn bob_commitments(pp: &CommitParams, dataset: &Dataset, seed: u64) -> BobCommitments {
    let mut rx = party_rng(seed, "commit-x");
    let mut ry = party_rng(seed, "commit-y");
    let (com_x, r_x) = dataset.xs.iter().map(|x| commit(pp, &x.to_bytes(), &mut rx)).unzip();
    let (com_y, r_y) = dataset.ys.iter().map(|y| commit(pp, &y.to_bytes(), &mut ry)).unzip();
    BobCommitments { com_x, r_x, com_y, r_y }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Weights,
    ModelCommitments,
    CoinReveal,
    Challenge,
    Activations,
    BChallenge,
    CCommitments,
    CProof,
    Score,
    Done,
}

pub struct Bob {
    pp: CommitParams,
    config: RunConfig,
    inputs: BobInputs,
    phase: Phase,
    coms: BobCommitments,
    coin: Option<CoinShare>,
    theta_b: Option<Model>,
    record: Option<ModelRecord>,
    com_a: Commitment,
    com_c: Commitment,
    alice_coin: Option<Commitment>,
    rep: Option<RepresentativeSet>,
    a_b: Vec<FixedTensor>,
    b_prover: Option<CnczkProver>,
    com_y_pred: Vec<Commitment>,
    c_trace: Option<TraceCommitment>,
    c_challenge: Option<Challenge>,
    phi: Option<crate::numerics::FixedScalar>,
}

/// `k` points nearest to point 0, which leaves the rest of the data uncovered.
fn clustered_subset(xs: &[FixedTensor], k: usize) -> Vec<usize> {
    let mut order: Vec<(u128, usize)> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (squared_distance(xs[0].data(), x.data()), i))
        .collect();
    order.sort_unstable();
    order.into_iter().take(k).map(|(_, i)| i).collect()
}

impl Bob {
    pub fn new(inputs: BobInputs, config: RunConfig) -> Result<Self, Abort> {
        let pp = config
            .commit_params()
            .map_err(|e| Abort::new(PartyId::P2, Stage::Setup, AbortCause::Setup, e.to_string()))?;
        let coms = bob_commitments(&pp, &inputs.dataset, inputs.seed);
        Ok(Self {
            pp,
            config,
            inputs,
            phase: Phase::Weights,
            coms,
            coin: None,
            theta_b: None,
            record: None,
            com_a: Commitment::default(),
            com_c: Commitment::default(),
            alice_coin: None,
            rep: None,
            a_b: Vec::new(),
            b_prover: None,
            com_y_pred: Vec::new(),
            c_trace: None,
            c_challenge: None,
            phi: None,
        })
    }

    pub fn phi(&self) -> Option<crate::numerics::FixedScalar> {
        self.phi
    }

    fn abort(&self, cause: AbortCause, reason: impl Into<String>) -> Abort {
        Abort::new(PartyId::P2, self.stage_now(), cause, reason)
    }

    fn stage_now(&self) -> Stage {
        match self.phase {
            Phase::Weights | Phase::ModelCommitments | Phase::CoinReveal => Stage::Commit,
            Phase::Challenge => Stage::Select,
            Phase::Activations | Phase::BChallenge | Phase::CCommitments | Phase::CProof => Stage::Infer,
            Phase::Score => Stage::Score,
            Phase::Done => Stage::Done,
        }
    }

    fn is(&self, a: Adversary) -> bool {
        self.inputs.adversary == Some(a)
    }

    fn xs(&self) -> &[FixedTensor] {
        &self.inputs.dataset.xs
    }

    fn data_commitments(&self) -> Body {
        Body::DataCommitments {
            com_x: self.coms.com_x.clone(),
            com_y: self.coms.com_y.clone(),
            coin: self.coin.map(|c| c.commitment(&self.pp)),
            record: self.inputs.record.clone(),
        }
    }

    fn on_model_commitments(
        &mut self,
        com_a: Commitment,
        com_c: Commitment,
        coin: Option<Commitment>,
        record: ModelRecord,
    ) -> Result<Vec<Outgoing>, Abort> {
        if !record.verify(&self.config.authority) {
            return Err(self.abort(AbortCause::Setup, "model authority signature does not verify"));
        }
        let theta_b = self.theta_b.as_ref().expect("weights received first");
        let kinds: Vec<LayerKind> = theta_b.layers.iter().map(|l| l.kind.clone()).collect();
        if kinds != record.kinds_b() || theta_b.layers.iter().any(|l| l.check_weights().is_err()) {
            return Err(self.abort(
                AbortCause::Setup,
                "block-B weights do not match the attested architecture",
            ));
        }
        if record.body.input_shape != self.inputs.dataset.feature_shape() {
            return Err(self.abort(AbortCause::Setup, "model input shape does not fit the dataset"));
        }
        self.com_a = com_a;
        self.com_c = com_c;
        self.record = Some(record);
        match (self.coin, coin) {
            (None, _) => self.select(None),
            (Some(_), Some(c)) => {
                self.alice_coin = Some(c);
                self.phase = Phase::CoinReveal;
                Ok(vec![])
            }
            (Some(_), None) => Err(self.abort(AbortCause::Malformed, "missing coin-flip commitment")),
        }
    }

    fn on_coin_reveal(&mut self, share: CoinShare) -> Result<Vec<Outgoing>, Abort> {
        let mine = self.coin.expect("projection configured");
        let theirs = self.alice_coin.expect("stored with the model commitments");
        let seed = coin_flip_seed(&self.pp, (&theirs, &share), (&mine.commitment(&self.pp), &mine))
            .map_err(|e| self.abort(AbortCause::CommitmentFailure, e.to_string()))?;
        let mut out = vec![Outgoing::new(PartyId::P1, &Body::CoinReveal { share: mine })];
        out.extend(self.select(Some(seed))?);
        Ok(out)
    }

    /// Stage 1 selection and the `d' ≤ d` self-check.
    fn select(&mut self, seed: Option<crate::commitments::Digest>) -> Result<Vec<Outgoing>, Abort> {
        self.phase = Phase::Challenge;
        let k = self.config.k;
        let n = self.xs().len();
        let projection = self
            .config
            .scoring
            .projection
            .map(|p| ProjectionConfig { dim: p.dim, seed });
        let mut indices = if self.is(Adversary::BobBadRepset) {
            clustered_subset(self.xs(), k)
        } else {
            let rep = select_representatives(self.xs(), k, projection.as_ref())
                .map_err(|e| self.abort(AbortCause::Setup, e.to_string()))?;
            if k < n {
                let d_prime = percentile_sq_distance(self.xs(), &rep, self.config.delta)
                    .map_err(|e| self.abort(AbortCause::Setup, e.to_string()))?;
                if d_prime > squared_threshold(self.config.d) {
                    return Err(self.abort(AbortCause::DPrimeCheck, "d' exceeds d on the selected set"));
                }
            }
            rep.indices
        };
        if self.is(Adversary::BobBadRepset) {
            let rep = RepresentativeSet::new(indices.clone(), n).expect("distinct in-range indices");
            let check = representativeness(self.xs(), &rep, self.config.d, self.config.delta);
            if !check.is_ok_and(|r| !r.holds) {
                // The clustered subset happens to cover the data; draw random ones.
                let mut rng = party_rng(self.inputs.seed, "adversary");
                for _ in 0..100 {
                    let cand = sample(&mut rng, n, k).into_vec();
                    let rep = RepresentativeSet::new(cand.clone(), n).expect("sampled indices are distinct");
                    if representativeness(self.xs(), &rep, self.config.d, self.config.delta).is_ok_and(|r| !r.holds) {
                        indices = cand;
                        break;
                    }
                }
            }
        }
        let honest =
            RepresentativeSet::new(indices.clone(), n).map_err(|e| self.abort(AbortCause::Setup, e.to_string()))?;
        if self.is(Adversary::BobWrongK) {
            indices.pop();
        }
        if self.is(Adversary::BobDuplicateIndices) && indices.len() > 1 {
            indices[1] = indices[0];
        }
        self.rep = Some(honest);
        let mut out = vec![Outgoing::new(PartyId::P1, &Body::RepIndices { indices })];
        if self.is(Adversary::BobReplayCommitments) {
            out.push(Outgoing::new(PartyId::P1, &self.data_commitments()));
        }
        Ok(out)
    }

    fn on_challenge(&mut self, indices: Vec<usize>) -> Result<Vec<Outgoing>, Abort> {
        let n = self.xs().len();
        let distinct = indices.iter().collect::<BTreeSet<_>>().len() == indices.len();
        if indices.len() != self.config.num_challenges || !distinct || indices.iter().any(|&i| i >= n) {
            return Err(self.abort(
                AbortCause::Malformed,
                format!(
                    "challenge of {} indices, expected {} distinct",
                    indices.len(),
                    self.config.num_challenges
                ),
            ));
        }
        let rep = self.rep.clone().expect("selected");
        let mut responses = cp_prove(self.xs(), &self.coms.r_x, &rep, self.config.d, &indices);
        if self.is(Adversary::BobBadCpOpening) {
            if let Some(CpResponse::Proof { point, .. }) =
                responses.iter_mut().find(|r| matches!(r, CpResponse::Proof { .. }))
            {
                point.r.0 .0[0] ^= 1;
            }
        }
        if self.is(Adversary::BobCpForgedWitness) {
            for r in responses.iter_mut() {
                let i = r.index();
                let point = crate::audit::PointOpening {
                    index: i,
                    x: self.xs()[i].clone(),
                    r: self.coms.r_x[i],
                };
                *r = CpResponse::Proof {
                    witness: point.clone(),
                    point,
                };
            }
        }
        if self.is(Adversary::BobCpWrongIndex) {
            let i = (indices[0] + 1) % n;
            responses[0] = CpResponse::Fail { index: i };
        }
        let cp = if self.is(Adversary::BobMalformedFrame) {
            Outgoing::raw(PartyId::P1, MessageKind::Proof, vec![0xff; 7])
        } else {
            Outgoing::new(
                PartyId::P1,
                &Body::CpResponses {
                    backend: TRANSPARENT_BACKEND.to_string(),
                    responses,
                },
            )
        };
        let mut xs: Vec<FixedTensor> = rep.indices.iter().map(|&i| self.xs()[i].clone()).collect();
        if self.is(Adversary::BobDealerBadX) {
            tamper_tensor(&mut xs[0]);
        }
        let r_x = rep.indices.iter().map(|&i| self.coms.r_x[i]).collect();
        self.phase = Phase::Activations;
        Ok(vec![
            cp,
            Outgoing::new(
                PartyId::Dealer,
                &Body::InferenceInputP2 {
                    xs,
                    r_x,
                    com_a: self.com_a,
                },
            ),
        ])
    }

    fn on_activations(
        &mut self,
        activations: Vec<FixedTensor>,
        com_a: Vec<Commitment>,
        r_a: Vec<Randomness>,
    ) -> Result<Vec<Outgoing>, Abort> {
        let k = self.config.k;
        if activations.len() != k || com_a.len() != k || r_a.len() != k {
            return Err(self.abort(AbortCause::Malformed, "activation count differs from k"));
        }
        let opened = activations
            .iter()
            .zip(&com_a)
            .zip(&r_a)
            .all(|((a, c), r)| open(&self.pp, c, &a.to_bytes(), r));
        if !opened {
            return Err(self.abort(AbortCause::CommitmentFailure, "dealer activations do not open"));
        }
        let theta_b = self.theta_b.as_ref().expect("received at Stage 0");
        let trace = full_trace(theta_b, &activations)
            .map_err(|e| self.abort(AbortCause::Malformed, format!("block B: {e}")))?;
        let prover = CnczkProver::from_trace(&self.pp, Variant::HiddenData, theta_b.layers.clone(), trace, None)
            .map_err(|e| self.abort(AbortCause::Malformed, e.to_string()))?
            .with_input_randomness(r_a);
        let mut a_b = prover.trace().outputs().to_vec();
        if self.is(Adversary::BobForgedAb) {
            tamper_tensor(&mut a_b[0]);
        }
        let trace = prover.commitment();
        self.a_b = prover.trace().outputs().to_vec();
        self.b_prover = Some(prover);
        self.phase = Phase::BChallenge;
        Ok(vec![Outgoing::new(PartyId::P1, &Body::BlockBOutputs { a_b, trace })])
    }

    fn on_b_challenge(&mut self, challenge: Challenge) -> Result<Vec<Outgoing>, Abort> {
        let prover = self.b_prover.as_ref().expect("committed");
        let ok =
            challenge.points.len() == challenge.layers.len() && challenge.points.iter().all(|&i| i < self.config.k);
        if !ok {
            return Err(self.abort(AbortCause::Malformed, "audit challenge out of range"));
        }
        let mut proof = prover
            .prove(&challenge)
            .map_err(|e| self.abort(AbortCause::Malformed, e.to_string()))?;
        if self.is(Adversary::BobForgedBProof) {
            tamper_proof(&mut proof);
        }
        self.phase = Phase::CCommitments;
        Ok(vec![Outgoing::new(PartyId::P1, &Body::AuditProof { proof })])
    }

    fn on_c_commitments(
        &mut self,
        com_y: Vec<Commitment>,
        trace: TraceCommitment,
        r_c: Randomness,
    ) -> Result<Vec<Outgoing>, Abort> {
        if !open(&self.pp, &self.com_c, trace.aux_root.as_bytes(), &r_c) {
            return Err(self.abort(
                AbortCause::CommitmentFailure,
                "com_C does not open onto the audited weights",
            ));
        }
        let k = self.config.k;
        if com_y.len() != k || trace.variant != Variant::HiddenWeights {
            return Err(self.abort(
                AbortCause::Malformed,
                "block-C commitments do not match the representative set",
            ));
        }
        let layers = self.record.as_ref().expect("verified at Stage 0").kinds_c().len();
        let (m, s) = self.config.audit_c.resolve(k, layers);
        let mut rng: ChaCha20Rng = party_rng(self.inputs.seed, "audit-c");
        let challenge =
            cnczk_challenge(&mut rng, k, layers, m, s).map_err(|e| self.abort(AbortCause::Malformed, e.to_string()))?;
        self.com_y_pred = com_y;
        self.c_trace = Some(trace);
        self.c_challenge = Some(challenge.clone());
        self.phase = Phase::CProof;
        Ok(vec![Outgoing::new(PartyId::P1, &Body::AuditChallenge { challenge })])
    }

    fn on_c_proof(&mut self, proof: crate::audit::CnczkProof) -> Result<Vec<Outgoing>, Abort> {
        let record = self.record.as_ref().expect("verified at Stage 0");
        let public = CnczkPublic {
            variant: Variant::HiddenWeights,
            points: self.config.k,
            layer_kinds: record.kinds_c(),
            layers: None,
            inputs: Some(&self.a_b),
            outputs: None,
            input_commitments: None,
            output_commitments: Some(&self.com_y_pred),
        };
        let trace = self.c_trace.as_ref().expect("stored");
        let challenge = self.c_challenge.as_ref().expect("issued");
        cnczk_verify(&self.pp, &public, trace, challenge, &proof)
            .map_err(|e| self.abort(AbortCause::ProofFailure, format!("π_C rejected: {e}")))?;

        let rep = self.rep.clone().expect("selected");
        let ys = &self.inputs.dataset.ys;
        let mut labels: Vec<FixedTensor> = rep.indices.iter().map(|&i| ys[i].clone()).collect();
        let mut label_randomness: Vec<Randomness> = rep.indices.iter().map(|&i| self.coms.r_y[i]).collect();
        let mut features = self.xs().to_vec();
        if self.is(Adversary::BobSubscoreBadLabelRandomness) {
            label_randomness[0].0 .0[0] ^= 1;
        }
        if self.is(Adversary::BobSubscorePermutedLabels) && labels.len() > 1 {
            let j = (1..labels.len()).find(|&j| labels[j] != labels[0]).unwrap_or(1);
            labels.swap(0, j);
            label_randomness.swap(0, j);
        }
        if self.is(Adversary::BobSubscoreSubstitutedFeatures) {
            tamper_tensor(&mut features[rep.indices[0]]);
        }
        let input = SubScoreP2 {
            features,
            feature_randomness: self.coms.r_x.clone(),
            labels,
            label_randomness,
            prediction_commitments: self.com_y_pred.clone(),
        };
        self.phase = Phase::Score;
        Ok(vec![Outgoing::new(
            PartyId::Dealer,
            &Body::SubScoreInputP2 {
                rep: rep.indices,
                input,
            },
        )])
    }
}

impl Actor for Bob {
    fn id(&self) -> PartyId {
        PartyId::P2
    }

    fn stage(&self) -> Stage {
        self.stage_now()
    }

    fn start(&mut self) -> Result<Vec<Outgoing>, Abort> {
        let body = &self.inputs.record.body;
        let own = body.n == self.xs().len()
            && commitment_root(&self.pp, &self.coms.com_x) == body.com_x_root
            && commitment_root(&self.pp, &self.coms.com_y) == body.com_y_root;
        if !own || !self.inputs.record.verify(&self.config.authority) {
            return Err(Abort::new(
                PartyId::P2,
                Stage::Setup,
                AbortCause::Setup,
                "data record does not cover this dataset",
            ));
        }
        if self.config.scoring.projection.is_some() {
            self.coin = Some(CoinShare::derive(&coin_seed(self.inputs.seed)));
        }
        self.phase = Phase::Weights;
        Ok(vec![Outgoing::new(PartyId::P1, &self.data_commitments())])
    }

    fn on_message(&mut self, msg: &Message) -> Result<Vec<Outgoing>, Abort> {
        let body = msg
            .decode()
            .map_err(|e| self.abort(AbortCause::Malformed, e.to_string()))?;
        match (self.phase, msg.sender, body) {
            (Phase::Weights, PartyId::P1, Body::PublicWeights { theta_b }) => {
                self.theta_b = Some(theta_b);
                self.phase = Phase::ModelCommitments;
                Ok(vec![])
            }
            (
                Phase::ModelCommitments,
                PartyId::P1,
                Body::ModelCommitments {
                    com_a,
                    com_c,
                    coin,
                    record,
                },
            ) => self.on_model_commitments(com_a, com_c, coin, record),
            (Phase::CoinReveal, PartyId::P1, Body::CoinReveal { share }) => self.on_coin_reveal(share),
            (Phase::Challenge, PartyId::P1, Body::CpChallenge { indices }) => self.on_challenge(indices),
            (
                Phase::Activations,
                PartyId::Dealer,
                Body::Activations {
                    activations,
                    com_a,
                    r_a,
                },
            ) => self.on_activations(activations, com_a, r_a),
            (Phase::BChallenge, PartyId::P1, Body::AuditChallenge { challenge }) => self.on_b_challenge(challenge),
            (Phase::CCommitments, PartyId::P1, Body::BlockCCommitments { com_y, trace, r_c }) => {
                self.on_c_commitments(com_y, trace, r_c)
            }
            (Phase::CProof, PartyId::P1, Body::AuditProof { proof }) => self.on_c_proof(proof),
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
