//! Typed protocol messages and their wire frames.
//!
//! Frame layout: `len: u32 BE ∥ kind: u8 ∥ seq: u64 BE ∥ payload`, where
//! `len` counts everything after itself and the payload is
//! `sender: u8 ∥ recipient: u8 ∥ bincode(body)`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::setup::{DataRecord, ModelRecord};
use super::{PartyId, ProtocolError, Stage};
use crate::audit::{Challenge, CnczkProof, CpResponse, TraceCommitment};
use crate::commitments::{Commitment, Randomness};
use crate::numerics::{FixedScalar, FixedTensor, Model};
use crate::scoring::{SubScoreP1, SubScoreP2};
use crate::selection::CoinShare;

/// Closed set of message kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MessageKind {
    Commitments = 1,
    Weights = 2,
    CoinReveal = 3,
    Indices = 4,
    Challenge = 5,
    Proof = 6,
    DealerInput = 7,
    Activations = 8,
    Score = 9,
    Abort = 10,
}

impl MessageKind {
    pub fn from_u8(b: u8) -> Option<Self> {
        use MessageKind::*;
        Some(match b {
            1 => Commitments,
            2 => Weights,
            3 => CoinReveal,
            4 => Indices,
            5 => Challenge,
            6 => Proof,
            7 => DealerInput,
            8 => Activations,
            9 => Score,
            10 => Abort,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        use MessageKind::*;
        match self {
            Commitments => "commitments",
            Weights => "weights",
            CoinReveal => "coin-reveal",
            Indices => "indices",
            Challenge => "challenge",
            Proof => "proof",
            DealerInput => "dealer-input",
            Activations => "activations",
            Score => "score",
            Abort => "abort",
        }
    }
}

/// Why a run stopped early.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortCause {
    Setup,
    DPrimeCheck,
    CpShortfall,
    ProofFailure,
    CommitmentFailure,
    DealerAbort,
    Malformed,
    Timeout,
}

impl AbortCause {
    pub fn name(self) -> &'static str {
        match self {
            AbortCause::Setup => "setup",
            AbortCause::DPrimeCheck => "d-prime-check",
            AbortCause::CpShortfall => "cp-shortfall",
            AbortCause::ProofFailure => "proof-failure",
            AbortCause::CommitmentFailure => "commitment-failure",
            AbortCause::DealerAbort => "dealer-abort",
            AbortCause::Malformed => "malformed-message",
            AbortCause::Timeout => "timeout",
        }
    }
}

/// Message bodies. Each variant belongs to exactly one kind and one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Body {
    /// P1 → P2: `com_A`, `com_C`, and the coin-flip commitment when projecting.
    ModelCommitments {
        com_a: Commitment,
        com_c: Commitment,
        coin: Option<Commitment>,
        record: ModelRecord,
    },
    /// P1 → P2: the public block-B weights.
    PublicWeights {
        theta_b: Model,
    },
    /// P2 → P1: `com_{x_i}`, `com_{y_i}` for every point.
    DataCommitments {
        com_x: Vec<Commitment>,
        com_y: Vec<Commitment>,
        coin: Option<Commitment>,
        record: DataRecord,
    },
    CoinReveal {
        share: CoinShare,
    },
    /// P2 → P1: `I_R`.
    RepIndices {
        indices: Vec<usize>,
    },
    /// P1 → P2: the CP challenge `I`.
    CpChallenge {
        indices: Vec<usize>,
    },
    CpResponses {
        backend: String,
        responses: Vec<CpResponse>,
    },
    InferenceInputP1 {
        theta_a: Model,
        r_a: Randomness,
        /// `com_{x_i}` for `i ∈ I_R` as received at Stage 0.
        com_x: Vec<Commitment>,
    },
    InferenceInputP2 {
        xs: Vec<FixedTensor>,
        r_x: Vec<Randomness>,
        /// `com_A` as received at Stage 0.
        com_a: Commitment,
    },
    /// Dealer → P1.
    ActivationCommitments {
        com_a: Vec<Commitment>,
    },
    /// Dealer → P2.
    Activations {
        activations: Vec<FixedTensor>,
        com_a: Vec<Commitment>,
        r_a: Vec<Randomness>,
    },
    /// P2 → P1: `a_B` and the trace commitment standing in for `π_B`.
    BlockBOutputs {
        a_b: Vec<FixedTensor>,
        trace: TraceCommitment,
    },
    /// Verifier → prover.
    AuditChallenge {
        challenge: Challenge,
    },
    AuditProof {
        proof: CnczkProof,
    },
    /// P1 → P2: `com_{y'_i}`, the trace commitment for `π_C`, and the
    /// opening of `com_C` onto the committed weight root.
    BlockCCommitments {
        com_y: Vec<Commitment>,
        trace: TraceCommitment,
        r_c: Randomness,
    },
    SubScoreInputP1 {
        rep: Vec<usize>,
        input: SubScoreP1,
    },
    SubScoreInputP2 {
        rep: Vec<usize>,
        input: SubScoreP2,
    },
    Score {
        phi: FixedScalar,
    },
    Abort {
        stage: Stage,
        cause: AbortCause,
        reason: String,
    },
}

impl Body {
    pub fn kind(&self) -> MessageKind {
        use Body::*;
        match self {
            ModelCommitments { .. }
            | DataCommitments { .. }
            | ActivationCommitments { .. }
            | BlockCCommitments { .. } => MessageKind::Commitments,
            PublicWeights { .. } => MessageKind::Weights,
            CoinReveal { .. } => MessageKind::CoinReveal,
            RepIndices { .. } => MessageKind::Indices,
            CpChallenge { .. } | AuditChallenge { .. } => MessageKind::Challenge,
            CpResponses { .. } | AuditProof { .. } => MessageKind::Proof,
            InferenceInputP1 { .. } | InferenceInputP2 { .. } | SubScoreInputP1 { .. } | SubScoreInputP2 { .. } => {
                MessageKind::DealerInput
            }
            Activations { .. } | BlockBOutputs { .. } => MessageKind::Activations,
            Score { .. } => MessageKind::Score,
            Abort { .. } => MessageKind::Abort,
        }
    }

    /// Stage the message belongs to; `None` for aborts.
    pub fn stage(&self) -> Option<Stage> {
        use Body::*;
        Some(match self {
            ModelCommitments { .. } | PublicWeights { .. } | DataCommitments { .. } | CoinReveal { .. } => {
                Stage::Commit
            }
            RepIndices { .. } | CpChallenge { .. } | CpResponses { .. } => Stage::Select,
            InferenceInputP1 { .. }
            | InferenceInputP2 { .. }
            | ActivationCommitments { .. }
            | Activations { .. }
            | BlockBOutputs { .. }
            | AuditChallenge { .. }
            | AuditProof { .. }
            | BlockCCommitments { .. } => Stage::Infer,
            SubScoreInputP1 { .. } | SubScoreInputP2 { .. } | Score { .. } => Stage::Score,
            Abort { .. } => return None,
        })
    }

    pub fn variant_name(&self) -> &'static str {
        use Body::*;
        match self {
            ModelCommitments { .. } => "model-commitments",
            PublicWeights { .. } => "public-weights",
            DataCommitments { .. } => "data-commitments",
            CoinReveal { .. } => "coin-reveal",
            RepIndices { .. } => "rep-indices",
            CpChallenge { .. } => "cp-challenge",
            CpResponses { .. } => "cp-responses",
            InferenceInputP1 { .. } => "inference-input-p1",
            InferenceInputP2 { .. } => "inference-input-p2",
            ActivationCommitments { .. } => "activation-commitments",
            Activations { .. } => "activations",
            BlockBOutputs { .. } => "block-b-outputs",
            AuditChallenge { .. } => "audit-challenge",
            AuditProof { .. } => "audit-proof",
            BlockCCommitments { .. } => "block-c-commitments",
            SubScoreInputP1 { .. } => "subscore-input-p1",
            SubScoreInputP2 { .. } => "subscore-input-p2",
            Score { .. } => "score",
            Abort { .. } => "abort",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        bincode::serialize(self).expect("message bodies always serialize")
    }
}

/// One framed message as it travels and as it is stored in a transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub kind: MessageKind,
    pub sender: PartyId,
    pub recipient: PartyId,
    /// `bincode(body)`.
    pub body: Vec<u8>,
}

impl Message {
    pub fn new(seq: u64, sender: PartyId, recipient: PartyId, body: &Body) -> Self {
        Self {
            seq,
            kind: body.kind(),
            sender,
            recipient,
            body: body.encode(),
        }
    }

    /// Decodes the body and checks it against the frame's kind tag.
    pub fn decode(&self) -> Result<Body, ProtocolError> {
        let body: Body = bincode::deserialize(&self.body)
            .map_err(|e| ProtocolError::Malformed(format!("seq {}: undecodable body: {e}", self.seq)))?;
        if body.kind() != self.kind {
            return Err(ProtocolError::Malformed(format!(
                "seq {}: {} body in a {} frame",
                self.seq,
                body.variant_name(),
                self.kind.name()
            )));
        }
        Ok(body)
    }

    pub fn visible_to(&self, party: PartyId) -> bool {
        self.sender == party || self.recipient == party
    }

    pub fn to_frame(&self) -> Vec<u8> {
        let len = 1 + 8 + 2 + self.body.len();
        let mut out = Vec::with_capacity(4 + len);
        out.extend_from_slice(&(len as u32).to_be_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.push(self.sender as u8);
        out.push(self.recipient as u8);
        out.extend_from_slice(&self.body);
        out
    }

    /// Parses one frame from the front of `bytes`; returns the rest.
    pub fn from_frame(bytes: &[u8]) -> Result<(Self, &[u8]), ProtocolError> {
        let malformed = |what: &str| ProtocolError::Malformed(format!("frame: {what}"));
        if bytes.len() < 4 {
            return Err(malformed("truncated length"));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        let rest = &bytes[4..];
        if len < 11 || rest.len() < len {
            return Err(malformed("truncated frame"));
        }
        let (frame, tail) = rest.split_at(len);
        Ok((Self::from_frame_body(frame)?, tail))
    }

    fn from_frame_body(frame: &[u8]) -> Result<Self, ProtocolError> {
        let malformed = |what: String| ProtocolError::Malformed(format!("frame: {what}"));
        let kind = MessageKind::from_u8(frame[0]).ok_or_else(|| malformed(format!("unknown kind {}", frame[0])))?;
        let seq = u64::from_be_bytes(frame[1..9].try_into().unwrap());
        let sender = PartyId::from_u8(frame[9]).ok_or_else(|| malformed(format!("unknown sender {}", frame[9])))?;
        let recipient =
            PartyId::from_u8(frame[10]).ok_or_else(|| malformed(format!("unknown recipient {}", frame[10])))?;
        Ok(Self {
            seq,
            kind,
            sender,
            recipient,
            body: frame[11..].to_vec(),
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.to_frame())
    }

    /// Reads one frame; `Ok(None)` on a clean end of stream.
    pub fn read_from<R: Read>(mut r: R) -> Result<Option<Self>, ProtocolError> {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(ProtocolError::from(e)),
        }
        let len = u32::from_be_bytes(len) as usize;
        if len < 11 {
            return Err(ProtocolError::Malformed("frame: length below header size".into()));
        }
        let mut frame = vec![0u8; len];
        r.read_exact(&mut frame)?;
        Self::from_frame_body(&frame).map(Some)
    }
}

/// Every routed message, in seq order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub messages: Vec<Message>,
}

impl Transcript {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.messages.iter().flat_map(Message::to_frame).collect()
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut messages = Vec::new();
        while !bytes.is_empty() {
            let (m, rest) = Message::from_frame(bytes)?;
            messages.push(m);
            bytes = rest;
        }
        Ok(Self { messages })
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Concatenated frames seen by `party`.
    pub fn view_of(&self, party: PartyId) -> impl Iterator<Item = &Message> {
        self.messages.iter().filter(move |m| m.visible_to(party))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip() {
        let body = Body::RepIndices { indices: vec![3, 1, 4] };
        let m = Message::new(7, PartyId::P2, PartyId::P1, &body);
        let frame = m.to_frame();
        assert_eq!(&frame[..4], &((frame.len() - 4) as u32).to_be_bytes());
        assert_eq!(frame[4], MessageKind::Indices as u8);
        assert_eq!(&frame[5..13], &7u64.to_be_bytes());
        let (back, rest) = Message::from_frame(&frame).unwrap();
        assert!(rest.is_empty());
        assert_eq!(back, m);
        assert_eq!(back.decode().unwrap(), body);
        assert_eq!(Message::read_from(&frame[..]).unwrap(), Some(m));
    }

    #[test]
    fn kind_mismatch_is_malformed() {
        let mut m = Message::new(0, PartyId::P1, PartyId::P2, &Body::CpChallenge { indices: vec![1] });
        m.kind = MessageKind::Score;
        assert!(matches!(m.decode(), Err(ProtocolError::Malformed(_))));
    }

    #[test]
    fn truncated_frames_rejected() {
        let frame = Message::new(1, PartyId::P1, PartyId::P2, &Body::Score { phi: FixedScalar::ONE }).to_frame();
        assert!(Message::from_frame(&frame[..frame.len() - 1]).is_err());
        assert!(Transcript::from_bytes(&frame[..3]).is_err());
    }
}
