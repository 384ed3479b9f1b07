//! Offline re-verification of a transcript by a third party.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::message::{Body, Message, Transcript};
use super::setup::{commitment_root, ModelRecord};
use super::{PartyId, ProtocolError, Stage};
use crate::audit::{cnczk_verify, cp_verify, Challenge, CnczkPublic, TraceCommitment, Variant, TRANSPARENT_BACKEND};
use crate::commitments::{open, CommitParams, Commitment};
use crate::numerics::{FixedScalar, FixedTensor, LayerKind, Model};
use crate::scoring::{f_subscore, SubScoreP1, SubScoreP2};
use crate::selection::{CoinShare, RepresentativeSet};

/// Public inputs of the run being replayed.
#[derive(Clone, Debug, Default)]
pub struct ReplayPublic {
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum ReplayVerdict {
    Consistent,
    /// First message that fails a public check, blamed on its sender.
    Violation {
        seq: u64,
        party: PartyId,
        reason: String,
    },
}

impl ReplayVerdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, ReplayVerdict::Consistent)
    }
}

fn route_ok(body: &Body, from: PartyId, to: PartyId) -> bool {
    use Body::*;
    use PartyId::*;
    match body {
        ModelCommitments { .. } | PublicWeights { .. } | CpChallenge { .. } | BlockCCommitments { .. } => {
            (from, to) == (P1, P2)
        }
        DataCommitments { .. } | RepIndices { .. } | CpResponses { .. } | BlockBOutputs { .. } => {
            (from, to) == (P2, P1)
        }
        CoinReveal { .. } | AuditChallenge { .. } | AuditProof { .. } => {
            (from, to) == (P1, P2) || (from, to) == (P2, P1)
        }
        InferenceInputP1 { .. } | SubScoreInputP1 { .. } => (from, to) == (P1, Dealer),
        InferenceInputP2 { .. } | SubScoreInputP2 { .. } => (from, to) == (P2, Dealer),
        ActivationCommitments { .. } => (from, to) == (Dealer, P1),
        Activations { .. } => (from, to) == (Dealer, P2),
        Score { .. } => from == Dealer && to != Dealer,
        Abort { .. } => match from {
            Dealer => to != Dealer,
            p => to == p.other(),
        },
    }
}

fn req<'a, T>(o: &'a Option<T>, what: &str) -> Result<&'a T, String> {
    o.as_ref().ok_or_else(|| format!("arrives before {what}"))
}

fn set_once<T>(slot: &mut Option<T>, value: T, what: &str) -> Result<(), String> {
    if slot.is_some() {
        return Err(format!("duplicate {what}"));
    }
    *slot = Some(value);
    Ok(())
}

#[derive(Default)]
struct Replay {
    com_a: Option<Commitment>,
    com_c: Option<Commitment>,
    coin_a: Option<Option<Commitment>>,
    coin_b: Option<Option<Commitment>>,
    reveal_a: Option<CoinShare>,
    reveal_b: Option<CoinShare>,
    record: Option<ModelRecord>,
    theta_b: Option<Model>,
    com_x: Option<Vec<Commitment>>,
    com_y: Option<Vec<Commitment>>,
    rep: Option<RepresentativeSet>,
    challenge: Option<Vec<usize>>,
    cp_done: Option<()>,
    inference_p1: Option<()>,
    inference_p2: Option<()>,
    com_act: Option<Vec<Commitment>>,
    activations: Option<()>,
    a_b: Option<(Vec<FixedTensor>, TraceCommitment)>,
    b_challenge: Option<Challenge>,
    b_proof: Option<()>,
    c_commit: Option<(Vec<Commitment>, TraceCommitment)>,
    c_challenge: Option<Challenge>,
    c_proof: Option<()>,
    sub_p1: Option<(Vec<usize>, SubScoreP1)>,
    sub_p2: Option<(Vec<usize>, SubScoreP2)>,
    phi: Option<FixedScalar>,
    scores: usize,
}

impl Replay {
    fn rep_commitments(&self, coms: &[Commitment]) -> Result<Vec<Commitment>, String> {
        let rep = req(&self.rep, "the representative indices")?;
        Ok(rep.indices.iter().map(|&i| coms[i]).collect())
    }

    fn apply(&mut self, pp: &CommitParams, config: &RunConfig, m: &Message, body: Body) -> Result<(), String> {
        let k = config.k;
        match body {
            Body::PublicWeights { theta_b } => set_once(&mut self.theta_b, theta_b, "block-B weights"),
            Body::ModelCommitments {
                com_a,
                com_c,
                coin,
                record,
            } => {
                if !record.verify(&config.authority) {
                    return Err("model record signature does not verify".into());
                }
                let theta_b = req(&self.theta_b, "the block-B weights")?;
                let kinds: Vec<LayerKind> = theta_b.layers.iter().map(|l| l.kind.clone()).collect();
                if kinds != record.kinds_b() {
                    return Err("block-B weights do not match the model record".into());
                }
                set_once(&mut self.record, record, "model commitments")?;
                self.com_a = Some(com_a);
                self.com_c = Some(com_c);
                self.coin_a = Some(coin);
                Ok(())
            }
            Body::DataCommitments {
                com_x,
                com_y,
                coin,
                record,
            } => {
                if !record.verify(&config.authority) {
                    return Err("data record signature does not verify".into());
                }
                let b = &record.body;
                if com_x.len() != b.n
                    || com_y.len() != b.n
                    || commitment_root(pp, &com_x) != b.com_x_root
                    || commitment_root(pp, &com_y) != b.com_y_root
                {
                    return Err("commitments differ from the data record".into());
                }
                config.validate(b.n).map_err(|e| e.to_string())?;
                set_once(&mut self.com_x, com_x, "data commitments")?;
                self.com_y = Some(com_y);
                self.coin_b = Some(coin);
                Ok(())
            }
            Body::CoinReveal { share } => {
                let (coin, slot) = match m.sender {
                    PartyId::P1 => (req(&self.coin_a, "the model commitments")?, &mut self.reveal_a),
                    _ => (req(&self.coin_b, "the data commitments")?, &mut self.reveal_b),
                };
                if *coin != Some(share.commitment(pp)) {
                    return Err("coin share does not open its commitment".into());
                }
                set_once(slot, share, "coin reveal")
            }
            Body::RepIndices { indices } => {
                let n = req(&self.com_x, "the data commitments")?.len();
                if indices.len() != k {
                    return Err(format!("{} indices for k = {k}", indices.len()));
                }
                let rep = RepresentativeSet::new(indices, n).map_err(|e| e.to_string())?;
                set_once(&mut self.rep, rep, "representative indices")
            }
            Body::CpChallenge { indices } => {
                let n = req(&self.com_x, "the data commitments")?.len();
                let distinct = indices.iter().collect::<BTreeSet<_>>().len() == indices.len();
                if indices.len() != config.num_challenges || !distinct || indices.iter().any(|&i| i >= n) {
                    return Err(format!(
                        "challenge of {} indices is not {} distinct points",
                        indices.len(),
                        config.num_challenges
                    ));
                }
                req(&self.rep, "the representative indices")?;
                set_once(&mut self.challenge, indices, "CP challenge")
            }
            Body::CpResponses { backend, responses } => {
                if backend != TRANSPARENT_BACKEND {
                    return Err(format!("unknown proof backend `{backend}`"));
                }
                let challenge = req(&self.challenge, "the CP challenge")?;
                let com_x = req(&self.com_x, "the data commitments")?;
                let rep = req(&self.rep, "the representative indices")?;
                let verdict = cp_verify(pp, com_x, rep, config.d, config.delta, challenge, &responses)
                    .map_err(|e| format!("CP proof: {e}"))?;
                if !verdict.accepted {
                    return Err(format!(
                        "CP shortfall: {} of {} proofs failed",
                        verdict.failures,
                        challenge.len()
                    ));
                }
                set_once(&mut self.cp_done, (), "CP responses")
            }
            Body::InferenceInputP1 { theta_a, r_a, com_x } => {
                req(&self.cp_done, "the CP responses")?;
                if !open(pp, req(&self.com_a, "com_A")?, &theta_a.to_bytes(None), &r_a) {
                    return Err("θ_A does not open com_A".into());
                }
                if com_x != self.rep_commitments(req(&self.com_x, "the data commitments")?)? {
                    return Err("forwarded com_x differ from Stage 0".into());
                }
                set_once(&mut self.inference_p1, (), "block-A input")
            }
            Body::InferenceInputP2 { xs, r_x, com_a } => {
                req(&self.challenge, "the CP challenge")?;
                if Some(com_a) != self.com_a {
                    return Err("forwarded com_A differs from Stage 0".into());
                }
                let coms = self.rep_commitments(req(&self.com_x, "the data commitments")?)?;
                if xs.len() != k || r_x.len() != k {
                    return Err("feature count differs from k".into());
                }
                if let Some(j) = (0..k).find(|&j| !open(pp, &coms[j], &xs[j].to_bytes(), &r_x[j])) {
                    return Err(format!("representative {j} does not open its commitment"));
                }
                set_once(&mut self.inference_p2, (), "block-A features")
            }
            Body::ActivationCommitments { com_a } => {
                req(&self.inference_p1, "P1's dealer input")?;
                req(&self.inference_p2, "P2's dealer input")?;
                if com_a.len() != k {
                    return Err("activation commitment count differs from k".into());
                }
                set_once(&mut self.com_act, com_a, "activation commitments")
            }
            Body::Activations {
                activations,
                com_a,
                r_a,
            } => {
                let coms = req(&self.com_act, "the activation commitments")?;
                if &com_a != coms || activations.len() != k || r_a.len() != k {
                    return Err("P2's activations do not match P1's commitments".into());
                }
                if (0..k).any(|j| !open(pp, &com_a[j], &activations[j].to_bytes(), &r_a[j])) {
                    return Err("activation does not open".into());
                }
                set_once(&mut self.activations, (), "activations")
            }
            Body::BlockBOutputs { a_b, trace } => {
                req(&self.activations, "the activations")?;
                if a_b.len() != k {
                    return Err("a_B count differs from k".into());
                }
                set_once(&mut self.a_b, (a_b, trace), "block-B outputs")
            }
            Body::AuditChallenge { challenge } => match m.sender {
                PartyId::P1 => {
                    req(&self.a_b, "the block-B outputs")?;
                    set_once(&mut self.b_challenge, challenge, "block-B audit challenge")
                }
                _ => {
                    req(&self.c_commit, "the block-C commitments")?;
                    set_once(&mut self.c_challenge, challenge, "block-C audit challenge")
                }
            },
            Body::AuditProof { proof } => {
                let (a_b, b_trace) = req(&self.a_b, "the block-B outputs")?;
                match m.sender {
                    PartyId::P2 => {
                        let theta_b = req(&self.theta_b, "the block-B weights")?;
                        let kinds: Vec<LayerKind> = theta_b.layers.iter().map(|l| l.kind.clone()).collect();
                        let public = CnczkPublic {
                            variant: Variant::HiddenData,
                            points: k,
                            layer_kinds: &kinds,
                            layers: Some(&theta_b.layers),
                            inputs: None,
                            outputs: Some(a_b),
                            input_commitments: Some(req(&self.com_act, "the activation commitments")?),
                            output_commitments: None,
                        };
                        let challenge = req(&self.b_challenge, "the block-B audit challenge")?;
                        cnczk_verify(pp, &public, b_trace, challenge, &proof).map_err(|e| format!("π_B: {e}"))?;
                        set_once(&mut self.b_proof, (), "block-B proof")
                    }
                    _ => {
                        let record = req(&self.record, "the model record")?;
                        let (com_y, c_trace) = req(&self.c_commit, "the block-C commitments")?;
                        let public = CnczkPublic {
                            variant: Variant::HiddenWeights,
                            points: k,
                            layer_kinds: record.kinds_c(),
                            layers: None,
                            inputs: Some(a_b),
                            outputs: None,
                            input_commitments: None,
                            output_commitments: Some(com_y),
                        };
                        let challenge = req(&self.c_challenge, "the block-C audit challenge")?;
                        cnczk_verify(pp, &public, c_trace, challenge, &proof).map_err(|e| format!("π_C: {e}"))?;
                        set_once(&mut self.c_proof, (), "block-C proof")
                    }
                }
            }
            Body::BlockCCommitments { com_y, trace, r_c } => {
                req(&self.b_proof, "the block-B proof")?;
                if !open(pp, req(&self.com_c, "com_C")?, trace.aux_root.as_bytes(), &r_c) {
                    return Err("com_C does not open onto the audited weights".into());
                }
                if com_y.len() != k || trace.variant != Variant::HiddenWeights {
                    return Err("block-C commitments do not match k".into());
                }
                set_once(&mut self.c_commit, (com_y, trace), "block-C commitments")
            }
            Body::SubScoreInputP1 { rep, input } => {
                req(&self.c_proof, "the block-C proof")?;
                if Some(&rep) != self.rep.as_ref().map(|r| &r.indices) {
                    return Err("scoring input names a different representative set".into());
                }
                let (com_y_pred, _) = req(&self.c_commit, "the block-C commitments")?;
                let opened = input.predictions.len() == k
                    && input.prediction_randomness.len() == k
                    && (0..k).all(|j| {
                        open(
                            pp,
                            &com_y_pred[j],
                            &input.predictions[j].to_bytes(),
                            &input.prediction_randomness[j],
                        )
                    });
                if !opened {
                    return Err("predictions do not open com_y'".into());
                }
                if Some(&input.feature_commitments) != self.com_x.as_ref()
                    || input.label_commitments != self.rep_commitments(req(&self.com_y, "the data commitments")?)?
                {
                    return Err("forwarded data commitments differ from Stage 0".into());
                }
                set_once(&mut self.sub_p1, (rep, input), "P1 scoring input")
            }
            Body::SubScoreInputP2 { rep, input } => {
                req(&self.c_proof, "the block-C proof")?;
                if Some(&rep) != self.rep.as_ref().map(|r| &r.indices) {
                    return Err("scoring input names a different representative set".into());
                }
                let com_x = req(&self.com_x, "the data commitments")?;
                let label_coms = self.rep_commitments(req(&self.com_y, "the data commitments")?)?;
                let features_ok = input.features.len() == com_x.len()
                    && input.feature_randomness.len() == com_x.len()
                    && (0..com_x.len()).all(|i| {
                        open(
                            pp,
                            &com_x[i],
                            &input.features[i].to_bytes(),
                            &input.feature_randomness[i],
                        )
                    });
                if !features_ok {
                    return Err("features do not open com_x".into());
                }
                let labels_ok = input.labels.len() == k
                    && input.label_randomness.len() == k
                    && (0..k).all(|j| {
                        open(
                            pp,
                            &label_coms[j],
                            &input.labels[j].to_bytes(),
                            &input.label_randomness[j],
                        )
                    });
                if !labels_ok {
                    return Err("labels do not open com_y".into());
                }
                let (com_y_pred, _) = req(&self.c_commit, "the block-C commitments")?;
                if &input.prediction_commitments != com_y_pred {
                    return Err("forwarded com_y' differ from P1's".into());
                }
                set_once(&mut self.sub_p2, (rep, input), "P2 scoring input")
            }
            Body::Score { phi } => {
                let expected = match self.phi {
                    Some(p) => p,
                    None => {
                        let (rep, p1) = req(&self.sub_p1, "P1's scoring input")?;
                        let (_, p2) = req(&self.sub_p2, "P2's scoring input")?;
                        let n = p2.features.len();
                        let rep = RepresentativeSet::new(rep.clone(), n).map_err(|e| e.to_string())?;
                        let report = f_subscore(pp, &config.scoring, &rep, p1, p2).map_err(|e| e.to_string())?;
                        self.phi = Some(report.phi);
                        report.phi
                    }
                };
                if phi != expected {
                    return Err(format!("announced φ = {phi} but the scoring inputs give {expected}"));
                }
                self.scores += 1;
                if self.scores > 2 {
                    return Err("more than two score messages".into());
                }
                Ok(())
            }
            Body::Abort { .. } => Ok(()),
        }
    }
}

pub fn transcript_replay(transcript: &Transcript, public: &ReplayPublic) -> Result<ReplayVerdict, ProtocolError> {
    if transcript.is_empty() {
        return Err(ProtocolError::MalformedTranscript("empty transcript".into()));
    }
    let config = &public.config;
    let pp = config.commit_params()?;
    let mut state = Replay::default();
    let mut stage = Stage::Commit;
    let mut aborted = false;
    for (i, m) in transcript.messages.iter().enumerate() {
        let violation = |reason: String| ReplayVerdict::Violation {
            seq: m.seq,
            party: m.sender,
            reason,
        };
        if m.seq != i as u64 {
            return Ok(violation(format!("seq {} at position {i}", m.seq)));
        }
        let body = match m.decode() {
            Ok(b) => b,
            Err(e) => return Ok(violation(e.to_string())),
        };
        if body.encode() != m.body {
            return Ok(violation("non-canonical body encoding".into()));
        }
        if !route_ok(&body, m.sender, m.recipient) {
            return Ok(violation(format!(
                "{} sent from {} to {}",
                body.variant_name(),
                m.sender,
                m.recipient
            )));
        }
        match body.stage() {
            None => aborted = true,
            Some(_) if aborted => return Ok(violation("message after an abort".into())),
            Some(s) if s < stage => return Ok(violation(format!("{} message after {stage}", s))),
            Some(s) => stage = s,
        }
        if let Err(reason) = state.apply(&pp, config, m, body) {
            return Ok(violation(reason));
        }
    }
    Ok(ReplayVerdict::Consistent)
}
