//! Deterministic message hub: a single FIFO queue delivers every message in
//! seq order, so a run is a pure function of the inputs and seeds.

use std::collections::VecDeque;
use std::fmt;
use std::io;
use std::process::Child;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use super::alice::Alice;
use super::bob::Bob;
use super::config::{AliceInputs, BobInputs, RunConfig};
use super::dealer::Dealer;
use super::message::{Body, Message, MessageKind, Transcript};
use super::{Abort, AbortCause, PartyId, ProtocolError, Stage};
use crate::numerics::FixedScalar;
use crate::scoring::ScoreReport;

/// Upper bound on messages per run; an honest run needs about twenty.
pub const MESSAGE_BUDGET: usize = 10_000;

/// A message an actor wants sent; the hub assigns seq and sender.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outgoing {
    pub recipient: PartyId,
    pub kind: MessageKind,
    pub body: Vec<u8>,
}

impl Outgoing {
    pub fn new(recipient: PartyId, body: &Body) -> Self {
        Self {
            recipient,
            kind: body.kind(),
            body: body.encode(),
        }
    }

    /// Arbitrary bytes under a kind tag, for fault injection.
    pub fn raw(recipient: PartyId, kind: MessageKind, body: Vec<u8>) -> Self {
        Self { recipient, kind, body }
    }
}

/// A sequential party state machine.
pub trait Actor {
    fn id(&self) -> PartyId;
    fn stage(&self) -> Stage;
    fn start(&mut self) -> Result<Vec<Outgoing>, Abort>;
    fn on_message(&mut self, msg: &Message) -> Result<Vec<Outgoing>, Abort>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    /// Dealer-internal; the parties only learn `φ`.
    pub report: ScoreReport,
    pub phi_p1: FixedScalar,
    pub phi_p2: FixedScalar,
    pub transcript: Transcript,
}

#[derive(Debug)]
pub enum RunFailure {
    Aborted { abort: Abort, transcript: Transcript },
    Error(ProtocolError),
}

impl RunFailure {
    pub fn abort(&self) -> Option<&Abort> {
        match self {
            RunFailure::Aborted { abort, .. } => Some(abort),
            RunFailure::Error(_) => None,
        }
    }

    pub fn transcript(&self) -> Option<&Transcript> {
        match self {
            RunFailure::Aborted { transcript, .. } => Some(transcript),
            RunFailure::Error(_) => None,
        }
    }
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunFailure::Aborted { abort, .. } => abort.fmt(f),
            RunFailure::Error(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for RunFailure {}

impl From<ProtocolError> for RunFailure {
    fn from(e: ProtocolError) -> Self {
        RunFailure::Error(e)
    }
}

/// A launched party process or thread.
pub enum PartyHandle {
    Process(Child),
    Thread(JoinHandle<Result<(), ProtocolError>>),
}

/// Starts the party `PartyId` and has it connect to the given address.
pub type Launcher = Arc<dyn Fn(PartyId, &str) -> io::Result<PartyHandle> + Send + Sync>;

#[derive(Clone)]
pub enum Transport {
    /// All parties in this process.
    InProc,
    /// Hub and dealer here; P1 and P2 reached over TCP.
    Socket { bind: String, launcher: Launcher },
}

impl fmt::Debug for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transport::InProc => f.write_str("InProc"),
            Transport::Socket { bind, .. } => f.debug_struct("Socket").field("bind", bind).finish_non_exhaustive(),
        }
    }
}

fn setup_failure(abort: Abort) -> RunFailure {
    RunFailure::Aborted {
        abort,
        transcript: Transcript::default(),
    }
}

pub fn run_privade(
    alice: AliceInputs,
    bob: BobInputs,
    config: &RunConfig,
    transport: &Transport,
) -> Result<RunOutcome, RunFailure> {
    config.commit_params()?;
    match transport {
        Transport::InProc => {
            let mut p1 = Alice::new(alice, config.clone()).map_err(setup_failure)?;
            let mut p2 = Bob::new(bob, config.clone()).map_err(setup_failure)?;
            let mut dealer = Dealer::new(config.clone()).map_err(setup_failure)?;
            run_with_actors(&mut p1, &mut p2, &mut dealer)
        }
        Transport::Socket { bind, launcher } => super::socket::run_socket(alice, bob, config, bind, launcher),
    }
}

struct Hub<'a> {
    p1: &'a mut dyn Actor,
    p2: &'a mut dyn Actor,
    dealer: &'a mut Dealer,
    transcript: Transcript,
    queue: VecDeque<usize>,
}

impl Hub<'_> {
    fn actor(&mut self, id: PartyId) -> &mut dyn Actor {
        match id {
            PartyId::P1 => self.p1,
            PartyId::P2 => self.p2,
            PartyId::Dealer => self.dealer,
        }
    }

    fn send(&mut self, sender: PartyId, outs: Vec<Outgoing>) {
        for o in outs {
            let seq = self.transcript.messages.len();
            self.transcript.messages.push(Message {
                seq: seq as u64,
                kind: o.kind,
                sender,
                recipient: o.recipient,
                body: o.body,
            });
            self.queue.push_back(seq);
        }
    }

    fn fail(mut self, abort: Abort) -> RunFailure {
        let body = Body::Abort {
            stage: abort.stage,
            cause: abort.cause,
            reason: abort.reason.clone(),
        };
        let recipients = match abort.party {
            PartyId::Dealer => vec![PartyId::P1, PartyId::P2],
            p => vec![p.other()],
        };
        let outs = recipients.into_iter().map(|r| Outgoing::new(r, &body)).collect();
        self.send(abort.party, outs);
        RunFailure::Aborted {
            abort,
            transcript: self.transcript,
        }
    }

    /// The party left waiting when nothing more arrives: whoever sent last,
    /// or the dealer's last recipient.
    fn waiting_party(&self) -> PartyId {
        match self.transcript.messages.last() {
            Some(m) if m.sender != PartyId::Dealer => m.sender,
            Some(m) => m.recipient,
            None => PartyId::P1,
        }
    }
}

/// Runs three actors to completion on one deterministic schedule.
pub fn run_with_actors(p1: &mut dyn Actor, p2: &mut dyn Actor, dealer: &mut Dealer) -> Result<RunOutcome, RunFailure> {
    let mut hub = Hub {
        p1,
        p2,
        dealer,
        transcript: Transcript::default(),
        queue: VecDeque::new(),
    };
    for id in [PartyId::P1, PartyId::P2] {
        match hub.actor(id).start() {
            Ok(outs) => hub.send(id, outs),
            Err(abort) => return Err(hub.fail(abort)),
        }
    }
    let mut phi = [None, None];
    while let Some(seq) = hub.queue.pop_front() {
        if hub.transcript.messages.len() > MESSAGE_BUDGET {
            let id = hub.waiting_party();
            let stage = hub.actor(id).stage();
            return Err(hub.fail(Abort::new(id, stage, AbortCause::Timeout, "message budget exhausted")));
        }
        let msg = hub.transcript.messages[seq].clone();
        let recipient = msg.recipient;
        match hub.actor(recipient).on_message(&msg) {
            Ok(outs) => hub.send(recipient, outs),
            Err(abort) => return Err(hub.fail(abort)),
        }
        if msg.kind == MessageKind::Score && recipient != PartyId::Dealer {
            if let Ok(Body::Score { phi: v }) = msg.decode() {
                phi[recipient as usize - 1] = Some(v);
            }
        }
    }
    let report = hub.dealer.report().cloned();
    match (phi, report) {
        ([Some(phi_p1), Some(phi_p2)], Some(report)) => Ok(RunOutcome {
            report,
            phi_p1,
            phi_p2,
            transcript: hub.transcript,
        }),
        _ => {
            let id = hub.waiting_party();
            let stage = hub.actor(id).stage();
            Err(hub.fail(Abort::new(id, stage, AbortCause::Timeout, "no further message arrived")))
        }
    }
}
