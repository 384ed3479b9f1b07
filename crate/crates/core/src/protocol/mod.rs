//! The two-party scoring protocol: party state machines, the trusted dealer
//! standing in for the ideal functionalities, transports, transcripts, and
//! the monolithic reference functionality.

mod adversary;
mod alice;
mod bob;
mod config;
mod dealer;
mod leakage;
mod message;
mod reference;
mod replay;
mod scheduler;
mod setup;
mod socket;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adversary::{Adversary, ADVERSARY_CATALOGUE};
pub use alice::Alice;
pub use bob::{bob_commitments, Bob, BobCommitments};
pub use config::{AliceInputs, AuditSpec, BobInputs, RunConfig};
pub use dealer::{f_inference_dealer, Dealer, InferenceOutput};
pub use leakage::{scan_leakage, LeakageFinding};
pub use message::{AbortCause, Body, Message, MessageKind, Transcript};
pub use reference::f_score_reference;
pub use replay::{transcript_replay, ReplayPublic, ReplayVerdict};
pub use scheduler::{
    run_privade, run_with_actors, Actor, Launcher, Outgoing, PartyHandle, RunFailure, RunOutcome, Transport,
    MESSAGE_BUDGET,
};
pub use setup::{issue_data_record, issue_model_record, AuthorityKey, DataRecord, ModelRecord};
pub use socket::{serve_party, PartyInit, RemoteActor};

use crate::commitments::hash_parts;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum PartyId {
    /// Model owner.
    P1 = 1,
    /// Data owner.
    P2 = 2,
    Dealer = 3,
}

impl PartyId {
    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            1 => Some(PartyId::P1),
            2 => Some(PartyId::P2),
            3 => Some(PartyId::Dealer),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            PartyId::P1 => PartyId::P2,
            PartyId::P2 => PartyId::P1,
            PartyId::Dealer => PartyId::Dealer,
        }
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartyId::P1 => "P1",
            PartyId::P2 => "P2",
            PartyId::Dealer => "dealer",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Setup,
    Commit,
    Select,
    Infer,
    Score,
    Done,
    Aborted,
}

impl Stage {
    /// Stage number as in the protocol description (Stage 0 … Stage 3).
    pub fn number(self) -> Option<u8> {
        match self {
            Stage::Commit => Some(0),
            Stage::Select => Some(1),
            Stage::Infer => Some(2),
            Stage::Score => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.number() {
            Some(n) => write!(f, "Stage {n}"),
            None => write!(f, "{self:?}"),
        }
    }
}

/// A party's decision to stop, with the stage it was in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abort {
    pub stage: Stage,
    pub cause: AbortCause,
    pub party: PartyId,
    pub reason: String,
}

impl Abort {
    pub fn new(party: PartyId, stage: Stage, cause: AbortCause, reason: impl Into<String>) -> Self {
        Self {
            stage,
            cause,
            party,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Abort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Abort: {} ({}) by {}: {}",
            self.stage,
            self.cause.name(),
            self.party,
            self.reason
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("malformed transcript: {0}")]
    MalformedTranscript(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("timed out waiting for a message")]
    Timeout,
}

impl From<std::io::Error> for ProtocolError {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => ProtocolError::Timeout,
            _ => ProtocolError::Transport(e.to_string()),
        }
    }
}

/// Purpose-specific RNG stream derived from a party seed.
pub fn party_rng(seed: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(hash_parts(&[b"privade/rng", label.as_bytes(), &seed.to_le_bytes()]).0)
}

/// Seed bytes for the coin-flip share of a party.
pub fn coin_seed(seed: u64) -> [u8; 8] {
    seed.to_le_bytes()
}
