//! Scripted ledger sessions and the bundled demo scenarios.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    fairness_hook, lock_hash, AccountId, EscrowCondition, FairnessOutcome, LedgerState, LedgerTx, LockPurpose,
    TxPayload, TxRejected,
};
use crate::commitments::hash_parts;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genesis {
    pub accounts: BTreeMap<AccountId, u64>,
    pub authorities: Vec<AccountId>,
    #[serde(default = "default_security")]
    pub security_level: u32,
    #[serde(default)]
    pub proof_fee: u64,
}

fn default_security() -> u32 {
    128
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    Tx(LedgerTx),
    /// Advance the clock by this many blocks.
    Advance(u64),
    /// Run the fairness hook on a final-message lock.
    FairnessHook(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub genesis: Genesis,
    pub steps: Vec<Step>,
}

impl Script {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scripts serialize")
    }
}

/// One line of the transaction log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: usize,
    pub height: u64,
    pub step: Step,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fairness: Option<FairnessOutcome>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptOutcome {
    pub state: LedgerState,
    pub log: Vec<LogEntry>,
}

impl ScriptOutcome {
    /// The log as newline-delimited JSON.
    pub fn log_ndjson(&self) -> String {
        self.log
            .iter()
            .map(|e| serde_json::to_string(e).expect("log entries serialize") + "\n")
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("step {index} ({kind}) rejected: {rejection}")]
pub struct ScriptError {
    pub index: usize,
    pub kind: String,
    pub rejection: TxRejected,
    /// State just before the rejected step.
    pub state: Box<LedgerState>,
}

pub fn run_script(script: &Script) -> Result<ScriptOutcome, ScriptError> {
    let g = &script.genesis;
    let mut state = LedgerState::genesis(
        g.accounts.clone(),
        g.authorities.iter().cloned(),
        g.security_level,
        g.proof_fee,
    );
    let mut log = Vec::with_capacity(script.steps.len());
    for (index, step) in script.steps.iter().enumerate() {
        let fail = |kind: &str, rejection, state: &LedgerState| ScriptError {
            index,
            kind: kind.into(),
            rejection,
            state: Box::new(state.clone()),
        };
        let mut fairness = None;
        match step {
            Step::Tx(tx) => state.apply(tx).map_err(|e| fail(tx.payload.kind(), e, &state))?,
            Step::Advance(blocks) => state.advance(*blocks),
            Step::FairnessHook(lock) => {
                fairness = Some(fairness_hook(&mut state, *lock).map_err(|e| fail("fairness-hook", e, &state))?);
            }
        }
        log.push(LogEntry {
            index,
            height: state.height,
            step: step.clone(),
            fairness,
        });
    }
    Ok(ScriptOutcome { state, log })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoScenario {
    /// The full workflow: registration, quotes, a scored evaluation and a
    /// settled sale.
    Honest,
    /// The data owner quotes with commitments the authority never posted.
    MismatchedQuote,
    /// The seller never reveals the key; the buyer is refunded.
    WithheldKey,
}

impl DemoScenario {
    pub const ALL: [DemoScenario; 3] = [
        DemoScenario::Honest,
        DemoScenario::MismatchedQuote,
        DemoScenario::WithheldKey,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DemoScenario::Honest => "honest",
            DemoScenario::MismatchedQuote => "mismatched-quote",
            DemoScenario::WithheldKey => "withheld-key",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

pub const DEMO_PRICE: u64 = 300;
pub const DEMO_FEE: u64 = 1;
pub const DEMO_CHALLENGES: u64 = 20;

/// Ids follow allocation order: data 0, model 1, request 2 (deposit 3),
/// quote 4 (deposit 5), proof fee 6, final-message lock 7, sale lock 8,
/// payment 9.
pub fn demo_script(scenario: DemoScenario) -> Script {
    let tag = |t: &str| hash_parts(&[b"privade/demo/", t.as_bytes()]);
    let tx = |signer: &str, payload| Step::Tx(LedgerTx::new(signer, payload));
    let final_message = b"score-message";
    let key = b"dataset-key";

    let quoted_x = match scenario {
        DemoScenario::MismatchedQuote => tag("com_x-tampered"),
        _ => tag("com_x"),
    };
    let mut steps = vec![
        tx(
            "data-authority",
            TxPayload::RegisterData {
                owner: "bob".into(),
                com_x: tag("com_x"),
                com_y: tag("com_y"),
            },
        ),
        tx(
            "model-authority",
            TxPayload::RegisterModel {
                owner: "alice".into(),
                com_a: tag("com_a"),
                com_b: tag("com_b"),
                com_c: tag("com_c"),
            },
        ),
        tx(
            "alice",
            TxPayload::RequestQuote {
                model: 1,
                requirements: "labelled digit images".into(),
                deposit: 100,
            },
        ),
        tx(
            "bob",
            TxPayload::SubmitQuote {
                request: 2,
                com_x: quoted_x,
                com_y: tag("com_y"),
                price: DEMO_PRICE,
                deposit: 50,
            },
        ),
        tx(
            "alice",
            TxPayload::Escrow {
                amount: DEMO_FEE * DEMO_CHALLENGES,
                condition: EscrowCondition::ProofFee {
                    quote: 4,
                    challenges: DEMO_CHALLENGES,
                },
            },
        ),
        tx("bob", TxPayload::Release { escrow: 6 }),
        tx(
            "bob",
            TxPayload::PostHashlock {
                hash: lock_hash(final_message),
                deadline: 10,
                purpose: LockPurpose::FinalMessage { quote: 4 },
            },
        ),
        tx(
            "bob",
            TxPayload::RevealKey {
                lock: 7,
                key: hex::encode(final_message),
            },
        ),
        Step::FairnessHook(7),
        tx("alice", TxPayload::Release { escrow: 3 }),
        tx("bob", TxPayload::Release { escrow: 5 }),
        tx(
            "bob",
            TxPayload::PostHashlock {
                hash: lock_hash(key),
                deadline: 20,
                purpose: LockPurpose::Exchange {
                    buyer: "alice".into(),
                    ciphertext_ref: "bafy-demo-encrypted-dataset".into(),
                    price: DEMO_PRICE,
                },
            },
        ),
        tx(
            "alice",
            TxPayload::Escrow {
                amount: DEMO_PRICE,
                condition: EscrowCondition::Payment { lock: 8 },
            },
        ),
    ];
    match scenario {
        DemoScenario::WithheldKey => {
            steps.push(Step::Advance(20));
            steps.push(tx("alice", TxPayload::Release { escrow: 9 }));
        }
        _ => {
            steps.push(Step::Advance(2));
            steps.push(tx(
                "bob",
                TxPayload::RevealKey {
                    lock: 8,
                    key: hex::encode(key),
                },
            ));
        }
    }
    Script {
        genesis: Genesis {
            accounts: [
                ("alice".to_string(), 1000),
                ("bob".to_string(), 500),
                ("data-authority".to_string(), 0),
                ("model-authority".to_string(), 0),
            ]
            .into(),
            authorities: vec!["data-authority".into(), "model-authority".into()],
            security_level: 128,
            proof_fee: DEMO_FEE,
        },
        steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{EscrowStatus, LockStatus};

    #[test]
    fn honest_demo_settles() {
        let out = run_script(&demo_script(DemoScenario::Honest)).unwrap();
        let s = &out.state;
        let fees = DEMO_FEE * DEMO_CHALLENGES;
        assert_eq!(s.balance("alice"), 1000 - DEMO_PRICE - fees);
        assert_eq!(s.balance("bob"), 500 + DEMO_PRICE + fees);
        assert!(s.escrows.values().all(|e| e.status == EscrowStatus::Released));
        assert_eq!(s.hashlocks[&8].status, LockStatus::Settled);
        assert_eq!(s.total_value(), 1500);
        assert_eq!(out.log_ndjson().lines().count(), out.log.len());
    }

    #[test]
    fn mismatched_quote_is_rejected_at_submission() {
        let err = run_script(&demo_script(DemoScenario::MismatchedQuote)).unwrap_err();
        assert_eq!((err.index, err.kind.as_str()), (3, "submit-quote"));
    }

    #[test]
    fn withheld_key_refunds() {
        let out = run_script(&demo_script(DemoScenario::WithheldKey)).unwrap();
        assert_eq!(out.state.hashlocks[&8].status, LockStatus::Refunded);
        assert_eq!(out.state.balance("alice"), 1000 - DEMO_FEE * DEMO_CHALLENGES);
    }

    #[test]
    fn scripts_round_trip() {
        for s in DemoScenario::ALL {
            let script = demo_script(s);
            assert_eq!(Script::from_json(&script.to_json()).unwrap(), script);
        }
    }
}
