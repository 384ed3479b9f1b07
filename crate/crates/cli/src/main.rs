//! `privade`: run the scoring protocol, plan audits, and drive the
//! marketplace simulation. JSON goes to stdout, logs to stderr.

mod inputs;

use std::fs;
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{ExitCode, Stdio};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use num_traits::ToPrimitive;
use privade_core::audit::{detection_probability_exact, plan_audit, AuditError, AuditPlan};
use privade_core::fixtures::{build_fixture, FixtureSpec, ModelFile};
use privade_core::market::{demo_script, run_script, DemoScenario, Script};
use privade_core::protocol::{
    run_privade, serve_party, Abort, Adversary, Launcher, PartyHandle, PartyId, RunFailure, Transport,
};
use privade_core::scoring::score_multi_oracle;
use privade_core::FixedScalar;
use serde_json::{json, Value};

use inputs::{load_fixture, read_file, Inputs};

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ABORT: u8 = 3;
const EXIT_PARSE: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse(String),
    /// A protocol run aborted; the JSON report is still printed.
    Abort(Abort, Value),
    Failed(String, Option<Value>),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Abort(..) => EXIT_ABORT,
            CliError::Failed(..) => EXIT_FAILED,
        }
    }
}

#[derive(Parser)]
#[command(name = "privade", version, about = "Privacy-preserving dataset scoring simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportMode {
    Inproc,
    Socket,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartyArg {
    P1,
    P2,
}

#[derive(Subcommand)]
enum Command {
    /// Run the two-party protocol and print the score report.
    Run {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value = "inproc")]
        transport: TransportMode,
        /// Scripted deviation, e.g. `bob-bad-repset`.
        #[arg(long)]
        adversary: Option<Adversary>,
        /// Write the framed transcript here.
        #[arg(long)]
        transcript_out: Option<PathBuf>,
    },
    /// Cheapest cut-and-choose plan reaching a detection target.
    PlanAudit { n: usize, l: usize, rho: f64, target: f64 },
    /// Detection probability of an audit plan.
    Detect {
        n: usize,
        l: usize,
        rho: f64,
        m: usize,
        s: usize,
    },
    /// Score in the clear, without the protocol.
    ScoreOracle {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Apply a marketplace transaction script and print the final ledger.
    MarketDemo {
        #[arg(long, conflicts_with = "scenario")]
        script: Option<PathBuf>,
        /// Bundled script: honest, mismatched-quote or withheld-key.
        #[arg(long)]
        scenario: Option<String>,
        /// Write the transaction log as NDJSON here.
        #[arg(long)]
        tx_log: Option<PathBuf>,
        /// Print the script instead of running it.
        #[arg(long)]
        emit_script: bool,
    },
    /// Generate a synthetic fixture.
    Fixture {
        /// toy, lenetxs, lenet5 or cnn5.
        #[arg(long, default_value = "toy")]
        arch: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        projection_dim: Option<usize>,
        /// Write the fixture here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the model (with split points) and dataset separately.
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long)]
        dataset_out: Option<PathBuf>,
        #[arg(long)]
        config_out: Option<PathBuf>,
    },
    /// Serve one party for a socket-transport hub.
    Party {
        #[arg(long)]
        connect: String,
        #[arg(long, value_enum)]
        party: PartyArg,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(out) => {
            print_json(&out);
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.code();
            match e {
                CliError::Abort(abort, report) => {
                    eprintln!("{abort}");
                    print_json(&report);
                }
                CliError::Failed(msg, report) => {
                    eprintln!("error: {msg}");
                    if let Some(r) = report {
                        print_json(&r);
                    }
                }
                CliError::Usage(msg) => eprintln!("usage error: {msg}"),
                CliError::Parse(msg) => eprintln!("parse error: {msg}"),
            }
            ExitCode::from(code)
        }
    }
}

fn print_json(v: &Value) {
    use std::io::Write;
    if !v.is_null() {
        // A closed stdout (e.g. piped into `head`) is not an error.
        let _ = writeln!(
            std::io::stdout().lock(),
            "{}",
            serde_json::to_string_pretty(v).expect("values serialize")
        );
    }
}

/// A fixed-point value as both its raw Q16.16 integer and its real value.
fn scalar(x: FixedScalar) -> Value {
    json!({ "raw": x.raw(), "value": x.to_f64() })
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("outputs serialize")
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display()), None))
}

fn dispatch(command: Command) -> Result<Value, CliError> {
    match command {
        Command::Run {
            inputs,
            transport,
            adversary,
            transcript_out,
        } => cmd_run(&inputs, transport, adversary, transcript_out),
        Command::PlanAudit { n, l, rho, target } => cmd_plan_audit(n, l, rho, target),
        Command::Detect { n, l, rho, m, s } => cmd_detect(&AuditPlan { n, l, m, s, rho }),
        Command::ScoreOracle { inputs } => cmd_score_oracle(&inputs),
        Command::MarketDemo {
            script,
            scenario,
            tx_log,
            emit_script,
        } => cmd_market_demo(script, scenario.as_deref(), tx_log, emit_script),
        Command::Fixture {
            arch,
            n,
            k,
            seed,
            projection_dim,
            out,
            model_out,
            dataset_out,
            config_out,
        } => {
            let fx = build_fixture(&FixtureSpec {
                arch,
                n,
                k,
                seed,
                projection_dim,
            })
            .map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(p) = model_out {
                let file = ModelFile {
                    split: fx.split.bands,
                    model: fx.model.clone(),
                };
                write_file(&p, serde_json::to_string(&file).expect("models serialize").as_bytes())?;
            }
            if let Some(p) = dataset_out {
                write_file(
                    &p,
                    serde_json::to_string(&fx.dataset)
                        .expect("datasets serialize")
                        .as_bytes(),
                )?;
            }
            if let Some(p) = config_out {
                write_file(
                    &p,
                    serde_json::to_string_pretty(&fx.config)
                        .expect("configs serialize")
                        .as_bytes(),
                )?;
            }
            match out {
                Some(p) => {
                    write_file(&p, serde_json::to_string(&fx).expect("fixtures serialize").as_bytes())?;
                    Ok(json!({ "written": p, "spec": fx.spec, "d": scalar(fx.config.d) }))
                }
                None => Ok(to_value(&fx)),
            }
        }
        Command::Party { connect, party } => {
            let id = match party {
                PartyArg::P1 => PartyId::P1,
                PartyArg::P2 => PartyId::P2,
            };
            let stream = TcpStream::connect(&connect)
                .map_err(|e| CliError::Failed(format!("cannot reach hub at {connect}: {e}"), None))?;
            serve_party(stream, id).map_err(|e| CliError::Failed(e.to_string(), None))?;
            Ok(Value::Null)
        }
    }
}

/// Spawns `privade party` children of this executable.
fn process_launcher() -> Result<Launcher, CliError> {
    let exe = std::env::current_exe().map_err(|e| CliError::Failed(format!("cannot locate executable: {e}"), None))?;
    Ok(Arc::new(move |id: PartyId, addr: &str| {
        let party = if id == PartyId::P1 { "p1" } else { "p2" };
        let child = std::process::Command::new(&exe)
            .args(["party", "--connect", addr, "--party", party])
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::inherit())
            .spawn()?;
        Ok(PartyHandle::Process(child))
    }))
}

fn cmd_run(
    inputs: &Inputs,
    mode: TransportMode,
    adversary: Option<Adversary>,
    transcript_out: Option<PathBuf>,
) -> Result<Value, CliError> {
    let fx = load_fixture(inputs)?;
    let (mut alice, mut bob) = (fx.alice.clone(), fx.bob.clone());
    if let Some(adv) = adversary {
        match adv.party() {
            PartyId::P1 => alice.adversary = Some(adv),
            _ => bob.adversary = Some(adv),
        }
    }
    let transport = match mode {
        TransportMode::Inproc => Transport::InProc,
        TransportMode::Socket => Transport::Socket {
            bind: "127.0.0.1:0".into(),
            launcher: process_launcher()?,
        },
    };
    info!("running n={} k={} over {transport:?}", fx.dataset.len(), fx.config.k);
    match run_privade(alice, bob, &fx.config, &transport) {
        Ok(out) => {
            if let Some(p) = &transcript_out {
                write_file(p, &out.transcript.to_bytes())?;
            }
            Ok(json!({
                "status": "ok",
                "phi": scalar(out.report.phi),
                "report": out.report,
                "phi_p1": scalar(out.phi_p1),
                "phi_p2": scalar(out.phi_p2),
                "messages": out.transcript.len(),
            }))
        }
        Err(RunFailure::Aborted { abort, transcript }) => {
            if let Some(p) = &transcript_out {
                write_file(p, &transcript.to_bytes())?;
            }
            let report = json!({ "status": "aborted", "abort": abort, "messages": transcript.len() });
            Err(CliError::Abort(abort, report))
        }
        Err(RunFailure::Error(e)) => Err(CliError::Failed(e.to_string(), None)),
    }
}

fn plan_json(plan: &AuditPlan) -> Result<Value, AuditError> {
    let exact = detection_probability_exact(plan)?;
    let fraction = plan.audit_fraction();
    Ok(json!({
        "plan": plan,
        "cost": plan.m * plan.s,
        "detection_probability": exact.to_f64(),
        "detection_probability_exact": exact.to_string(),
        "audit_fraction": fraction.to_f64(),
        "audit_fraction_exact": fraction.to_string(),
    }))
}

fn audit_error(e: AuditError) -> CliError {
    match e {
        AuditError::PlanInvalid(m) => CliError::Usage(format!("invalid audit plan: {m}")),
        other => CliError::Failed(other.to_string(), None),
    }
}

fn cmd_plan_audit(n: usize, l: usize, rho: f64, target: f64) -> Result<Value, CliError> {
    let plan = plan_audit(n, l, rho, target).map_err(audit_error)?;
    plan_json(&plan).map_err(audit_error)
}

fn cmd_detect(plan: &AuditPlan) -> Result<Value, CliError> {
    plan_json(plan).map_err(audit_error)
}

fn cmd_score_oracle(inputs: &Inputs) -> Result<Value, CliError> {
    let fx = load_fixture(inputs)?;
    let mut scoring = fx.config.scoring;
    scoring.projection = fx.projection();
    let report = score_multi_oracle(&fx.split, &fx.dataset, fx.config.k, &scoring)
        .map_err(|e| CliError::Failed(e.to_string(), None))?;
    Ok(json!({ "status": "ok", "phi": scalar(report.phi), "report": report }))
}

fn cmd_market_demo(
    script: Option<PathBuf>,
    scenario: Option<&str>,
    tx_log: Option<PathBuf>,
    emit: bool,
) -> Result<Value, CliError> {
    let script = match (script, scenario) {
        (Some(path), _) => {
            Script::from_json(&read_file(&path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?
        }
        (None, name) => {
            let name = name.unwrap_or("honest");
            let s =
                DemoScenario::from_name(name).ok_or_else(|| CliError::Usage(format!("unknown scenario `{name}`")))?;
            demo_script(s)
        }
    };
    if emit {
        return Ok(to_value(&script));
    }
    let initial: u64 = script.genesis.accounts.values().sum();
    match run_script(&script) {
        Ok(out) => {
            if let Some(p) = &tx_log {
                write_file(p, out.log_ndjson().as_bytes())?;
            }
            info!("applied {} steps, final height {}", out.log.len(), out.state.height);
            Ok(json!({
                "status": "ok",
                "conserved": out.state.total_value() == initial,
                "state": out.state,
            }))
        }
        Err(e) => {
            let report = json!({
                "status": "rejected",
                "index": e.index,
                "kind": e.kind,
                "rejection": e.rejection,
                "reason": e.rejection.to_string(),
                "state": e.state,
            });
            Err(CliError::Failed(e.to_string(), Some(report)))
        }
    }
}
