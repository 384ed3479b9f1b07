//! TCP transport. The hub and dealer stay in the calling process; each party
//! runs `serve_party` in its own process (or thread) and talks to the hub over
//! a length-prefixed control channel carrying wire frames.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::alice::Alice;
use super::bob::Bob;
use super::config::{AliceInputs, BobInputs, RunConfig};
use super::dealer::Dealer;
use super::message::Message;
use super::scheduler::{run_with_actors, Actor, Launcher, Outgoing, PartyHandle, RunFailure, RunOutcome, Transport};
use super::{Abort, AbortCause, PartyId, ProtocolError, Stage};

/// What the hub hands a party process before the run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum PartyInit {
    Alice(Box<AliceInputs>, Box<RunConfig>),
    Bob(Box<BobInputs>, Box<RunConfig>),
}

#[derive(Debug, Serialize, Deserialize)]
enum Command {
    Init(PartyInit),
    Start,
    /// One wire frame.
    Deliver(Vec<u8>),
}

#[derive(Debug, Serialize, Deserialize)]
enum Reply {
    Hello(PartyId),
    Outputs { outs: Vec<Outgoing>, stage: Stage },
    Aborted(Abort),
}

fn write_ctl<T: Serialize>(w: &mut impl Write, value: &T) -> Result<(), ProtocolError> {
    let bytes = bincode::serialize(value).map_err(|e| ProtocolError::Transport(e.to_string()))?;
    w.write_all(&(bytes.len() as u32).to_be_bytes())?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// `Ok(None)` on a clean end of stream.
fn read_ctl<T: DeserializeOwned>(r: &mut impl Read) -> Result<Option<T>, ProtocolError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let mut buf = vec![0u8; u32::from_be_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    bincode::deserialize(&buf)
        .map(Some)
        .map_err(|e| ProtocolError::Malformed(format!("control message: {e}")))
}

/// Party side: announce `party`, build the state machine from the hub's
/// init message, then answer commands until the hub hangs up.
pub fn serve_party(mut stream: TcpStream, party: PartyId) -> Result<(), ProtocolError> {
    stream.set_nodelay(true).ok();
    write_ctl(&mut stream, &Reply::Hello(party))?;
    let Some(Command::Init(init)) = read_ctl::<Command>(&mut stream)? else {
        return Err(ProtocolError::Transport("expected an init command".into()));
    };
    let built: Result<Box<dyn Actor>, Abort> = match init {
        PartyInit::Alice(inputs, config) if party == PartyId::P1 => {
            Alice::new(*inputs, *config).map(|a| Box::new(a) as Box<dyn Actor>)
        }
        PartyInit::Bob(inputs, config) if party == PartyId::P2 => {
            Bob::new(*inputs, *config).map(|b| Box::new(b) as Box<dyn Actor>)
        }
        _ => return Err(ProtocolError::Transport(format!("init does not match party {party}"))),
    };
    let mut actor = match built {
        Ok(a) => a,
        Err(abort) => {
            // Report on the first command so the hub sees a proper abort.
            let _ = read_ctl::<Command>(&mut stream)?;
            return write_ctl(&mut stream, &Reply::Aborted(abort));
        }
    };
    while let Some(cmd) = read_ctl::<Command>(&mut stream)? {
        let result = match cmd {
            Command::Start => actor.start(),
            Command::Deliver(frame) => {
                let (msg, _) = Message::from_frame(&frame)?;
                actor.on_message(&msg)
            }
            Command::Init(_) => return Err(ProtocolError::Transport("duplicate init".into())),
        };
        let reply = match result {
            Ok(outs) => Reply::Outputs {
                outs,
                stage: actor.stage(),
            },
            Err(abort) => Reply::Aborted(abort),
        };
        write_ctl(&mut stream, &reply)?;
    }
    Ok(())
}

/// Hub-side proxy for a party served over TCP.
pub struct RemoteActor {
    id: PartyId,
    stream: TcpStream,
    stage: Stage,
}

impl RemoteActor {
    fn call(&mut self, cmd: &Command) -> Result<Vec<Outgoing>, Abort> {
        let io_abort = |id: PartyId, stage: Stage, e: ProtocolError| {
            let cause = match e {
                ProtocolError::Timeout => AbortCause::Timeout,
                _ => AbortCause::Malformed,
            };
            // The counterparty is the one left waiting.
            Abort::new(id.other(), stage, cause, format!("{id} unreachable: {e}"))
        };
        let reply = write_ctl(&mut self.stream, cmd).and_then(|()| read_ctl::<Reply>(&mut self.stream));
        match reply {
            Ok(Some(Reply::Outputs { outs, stage })) => {
                self.stage = stage;
                Ok(outs)
            }
            Ok(Some(Reply::Aborted(abort))) => Err(abort),
            Ok(Some(Reply::Hello(_))) => Err(io_abort(
                self.id,
                self.stage,
                ProtocolError::Transport("unexpected hello".into()),
            )),
            Ok(None) => Err(io_abort(
                self.id,
                self.stage,
                ProtocolError::Transport("connection closed".into()),
            )),
            Err(e) => Err(io_abort(self.id, self.stage, e)),
        }
    }
}

impl Actor for RemoteActor {
    fn id(&self) -> PartyId {
        self.id
    }

    fn stage(&self) -> Stage {
        self.stage
    }

    fn start(&mut self) -> Result<Vec<Outgoing>, Abort> {
        self.call(&Command::Start)
    }

    fn on_message(&mut self, msg: &Message) -> Result<Vec<Outgoing>, Abort> {
        self.call(&Command::Deliver(msg.to_frame()))
    }
}

fn accept_within(listener: &TcpListener, timeout: Duration) -> Result<TcpStream, ProtocolError> {
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + timeout;
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                return Ok(stream);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(ProtocolError::Timeout);
                }
                std::thread::sleep(Duration::from_millis(2));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn connect_party(
    listener: &TcpListener,
    launcher: &Launcher,
    id: PartyId,
    init: PartyInit,
    timeout: Duration,
) -> Result<(RemoteActor, PartyHandle), ProtocolError> {
    let addr = listener.local_addr()?.to_string();
    let handle = launcher(id, &addr)?;
    let mut stream = accept_within(listener, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_nodelay(true).ok();
    match read_ctl::<Reply>(&mut stream)? {
        Some(Reply::Hello(got)) if got == id => {}
        _ => return Err(ProtocolError::Transport(format!("{id} did not announce itself"))),
    }
    write_ctl(&mut stream, &Command::Init(init))?;
    Ok((
        RemoteActor {
            id,
            stream,
            stage: Stage::Setup,
        },
        handle,
    ))
}

fn reap(handle: PartyHandle) {
    match handle {
        PartyHandle::Process(mut child) => {
            if child.wait().is_err() {
                let _ = child.kill();
            }
        }
        PartyHandle::Thread(t) => {
            let _ = t.join();
        }
    }
}

pub(crate) fn run_socket(
    alice: AliceInputs,
    bob: BobInputs,
    config: &RunConfig,
    bind: &str,
    launcher: &Launcher,
) -> Result<RunOutcome, RunFailure> {
    let timeout = Duration::from_millis(config.timeout_ms.max(1));
    let listener = TcpListener::bind(bind).map_err(ProtocolError::from)?;
    let mut dealer = Dealer::new(config.clone()).map_err(|abort| RunFailure::Aborted {
        abort,
        transcript: Default::default(),
    })?;
    let cfg = || Box::new(config.clone());
    let (mut p1, h1) = connect_party(
        &listener,
        launcher,
        PartyId::P1,
        PartyInit::Alice(Box::new(alice), cfg()),
        timeout,
    )?;
    let (mut p2, h2) = match connect_party(
        &listener,
        launcher,
        PartyId::P2,
        PartyInit::Bob(Box::new(bob), cfg()),
        timeout,
    ) {
        Ok(p) => p,
        Err(e) => {
            drop(p1);
            reap(h1);
            return Err(e.into());
        }
    };
    let result = run_with_actors(&mut p1, &mut p2, &mut dealer);
    drop(p1);
    drop(p2);
    reap(h1);
    reap(h2);
    result
}

impl Transport {
    /// Socket transport whose parties run on local threads.
    pub fn socket_threads(bind: impl Into<String>) -> Self {
        let launcher: Launcher = std::sync::Arc::new(|id, addr: &str| {
            let addr = addr.to_string();
            Ok(PartyHandle::Thread(std::thread::spawn(move || {
                let stream = TcpStream::connect(&addr)?;
                serve_party(stream, id)
            })))
        });
        Transport::Socket {
            bind: bind.into(),
            launcher,
        }
    }
}
