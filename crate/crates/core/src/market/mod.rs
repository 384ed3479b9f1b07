//! In-memory data marketplace ledger: commitment registry, quotes, escrows
//! with slashing, and hash-locked exchanges.
//!
//! Time is a logical block height that only the test clock advances. Value
//! lives either in account balances or in open escrows; a hash lock carries
//! no funds of its own, the buyer's payment escrow holds them.

mod script;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commitments::{hash_parts, Digest};
use crate::protocol::{PartyId, ReplayVerdict};

pub use script::{
    demo_script, run_script, DemoScenario, Genesis, LogEntry, Script, ScriptError, ScriptOutcome, Step,
    DEMO_CHALLENGES, DEMO_FEE, DEMO_PRICE,
};

pub type AccountId = String;

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "kebab-case")]
pub enum TxRejected {
    #[error("{signer} may not {action}")]
    Unauthorized { signer: AccountId, action: String },
    #[error("{account} holds {balance}, needs {needed}")]
    InsufficientFunds {
        account: AccountId,
        balance: u64,
        needed: u64,
    },
    #[error("no {what} with id {id}")]
    Unknown { what: String, id: u64 },
    #[error("preimage does not match the hash lock {lock}")]
    WrongPreimage { lock: u64 },
    #[error("{reason}")]
    Invalid { reason: String },
}

fn invalid(msg: impl Into<String>) -> TxRejected {
    TxRejected::Invalid { reason: msg.into() }
}

fn unknown(what: &str, id: u64) -> TxRejected {
    TxRejected::Unknown { what: what.into(), id }
}

/// `H(k)` as checked by the contract.
pub fn lock_hash(key: &[u8]) -> Digest {
    hash_parts(&[b"privade/hashlock", key])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataEntry {
    pub owner: AccountId,
    pub authority: AccountId,
    pub com_x: Digest,
    pub com_y: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub owner: AccountId,
    pub authority: AccountId,
    pub com_a: Digest,
    pub com_b: Digest,
    pub com_c: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteRequest {
    pub requester: AccountId,
    pub model: u64,
    pub requirements: String,
    pub deposit: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuoteStatus {
    Evaluating,
    Scored,
    Slashed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quote {
    pub request: u64,
    pub contributor: AccountId,
    pub data: u64,
    pub price: u64,
    pub deposit: u64,
    pub status: QuoteStatus,
}

impl Quote {
    fn terminal(&self) -> bool {
        self.status != QuoteStatus::Evaluating
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "kebab-case")]
pub enum EscrowCondition {
    /// Model owner's deposit for a quote request; forfeited on deviation.
    RequestDeposit { request: u64 },
    /// Data owner's deposit for one quote.
    QuoteDeposit { quote: u64 },
    /// Buyer's payment into a hash lock.
    Payment { lock: u64 },
    /// Verifier's prepayment for proofs, claimable by the prover.
    ProofFee { quote: u64, challenges: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EscrowStatus {
    Open,
    Released,
    Slashed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Escrow {
    pub holder: AccountId,
    pub amount: u64,
    pub condition: EscrowCondition,
    pub status: EscrowStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "purpose", rename_all = "kebab-case")]
pub enum LockPurpose {
    /// Encrypted dataset sold for `price`; `ciphertext_ref` is an opaque
    /// content id.
    Exchange {
        buyer: AccountId,
        ciphertext_ref: String,
        price: u64,
    },
    /// Pre-commitment to the final scoring message of a quote's run.
    FinalMessage { quote: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LockStatus {
    Pending,
    Funded,
    Settled,
    Refunded,
    Expired,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashLock {
    pub poster: AccountId,
    pub hash: Digest,
    pub deadline: u64,
    pub purpose: LockPurpose,
    pub status: LockStatus,
    pub escrow: Option<u64>,
    /// Revealed preimage, hex.
    pub key: Option<String>,
}

/// Deviation proof backing a slash: a transcript position and the replay
/// verdict that blames it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub seq: u64,
    pub verdict: ReplayVerdict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TxPayload {
    RegisterData {
        owner: AccountId,
        com_x: Digest,
        com_y: Digest,
    },
    RegisterModel {
        owner: AccountId,
        com_a: Digest,
        com_b: Digest,
        com_c: Digest,
    },
    RequestQuote {
        model: u64,
        requirements: String,
        deposit: u64,
    },
    SubmitQuote {
        request: u64,
        com_x: Digest,
        com_y: Digest,
        price: u64,
        deposit: u64,
    },
    Escrow {
        amount: u64,
        condition: EscrowCondition,
    },
    Slash {
        escrow: u64,
        quote: u64,
        evidence: Evidence,
    },
    PostHashlock {
        hash: Digest,
        deadline: u64,
        purpose: LockPurpose,
    },
    RevealKey {
        lock: u64,
        key: String,
    },
    Release {
        escrow: u64,
    },
}

impl TxPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            TxPayload::RegisterData { .. } => "register-data",
            TxPayload::RegisterModel { .. } => "register-model",
            TxPayload::RequestQuote { .. } => "request-quote",
            TxPayload::SubmitQuote { .. } => "submit-quote",
            TxPayload::Escrow { .. } => "escrow",
            TxPayload::Slash { .. } => "slash",
            TxPayload::PostHashlock { .. } => "post-hashlock",
            TxPayload::RevealKey { .. } => "reveal-key",
            TxPayload::Release { .. } => "release",
        }
    }
}

/// A transaction. The signer is the sending address; authority-only kinds
/// are accepted from registered authority addresses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTx {
    pub signer: AccountId,
    pub payload: TxPayload,
}

impl LedgerTx {
    pub fn new(signer: impl Into<AccountId>, payload: TxPayload) -> Self {
        Self {
            signer: signer.into(),
            payload,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerState {
    pub height: u64,
    /// Commitment security parameter fixed at genesis.
    pub security_level: u32,
    /// Flat fee per proof challenge.
    pub proof_fee: u64,
    pub authorities: BTreeSet<AccountId>,
    pub accounts: BTreeMap<AccountId, u64>,
    pub data_registry: BTreeMap<u64, DataEntry>,
    pub model_registry: BTreeMap<u64, ModelEntry>,
    pub requests: BTreeMap<u64, QuoteRequest>,
    pub quotes: BTreeMap<u64, Quote>,
    pub escrows: BTreeMap<u64, Escrow>,
    pub hashlocks: BTreeMap<u64, HashLock>,
    pub next_id: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum ExchangeOutcome {
    Settled { lock: u64 },
    Refunded { lock: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum FairnessOutcome {
    Ok,
    Slashed { escrow: u64, to: AccountId, amount: u64 },
}

impl LedgerState {
    pub fn genesis(
        accounts: impl IntoIterator<Item = (AccountId, u64)>,
        authorities: impl IntoIterator<Item = AccountId>,
        security_level: u32,
        proof_fee: u64,
    ) -> Self {
        Self {
            security_level,
            proof_fee,
            authorities: authorities.into_iter().collect(),
            accounts: accounts.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn balance(&self, account: &str) -> u64 {
        self.accounts.get(account).copied().unwrap_or(0)
    }

    pub fn escrowed(&self) -> u64 {
        self.escrows
            .values()
            .filter(|e| e.status == EscrowStatus::Open)
            .map(|e| e.amount)
            .sum()
    }

    /// Balances plus open escrows; constant across every transition.
    pub fn total_value(&self) -> u64 {
        self.accounts.values().sum::<u64>() + self.escrowed()
    }

    /// Test clock.
    pub fn advance(&mut self, blocks: u64) {
        self.height += blocks;
    }

    /// Applies `tx` atomically: on rejection the state is untouched.
    pub fn apply(&mut self, tx: &LedgerTx) -> Result<(), TxRejected> {
        *self = apply_tx(self, tx)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger state serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn debit(&mut self, account: &str, amount: u64) -> Result<(), TxRejected> {
        let balance = self.balance(account);
        if balance < amount {
            return Err(TxRejected::InsufficientFunds {
                account: account.into(),
                balance,
                needed: amount,
            });
        }
        self.accounts.insert(account.into(), balance - amount);
        Ok(())
    }

    fn credit(&mut self, account: &str, amount: u64) {
        *self.accounts.entry(account.into()).or_insert(0) += amount;
    }

    fn lock_funds(&mut self, holder: &str, amount: u64, condition: EscrowCondition) -> Result<u64, TxRejected> {
        self.debit(holder, amount)?;
        let id = self.fresh_id();
        self.escrows.insert(
            id,
            Escrow {
                holder: holder.into(),
                amount,
                condition,
                status: EscrowStatus::Open,
            },
        );
        Ok(id)
    }

    /// Closes an open escrow, paying its amount to `to`.
    fn settle(&mut self, id: u64, to: &str, status: EscrowStatus) -> Result<(), TxRejected> {
        let e = self.escrows.get_mut(&id).ok_or_else(|| unknown("escrow", id))?;
        if e.status != EscrowStatus::Open {
            return Err(invalid(format!("escrow {id} is already {:?}", e.status).to_lowercase()));
        }
        e.status = status;
        let amount = e.amount;
        self.credit(to, amount);
        Ok(())
    }

    fn quote(&self, id: u64) -> Result<&Quote, TxRejected> {
        self.quotes.get(&id).ok_or_else(|| unknown("quote", id))
    }

    fn request(&self, id: u64) -> Result<&QuoteRequest, TxRejected> {
        self.requests.get(&id).ok_or_else(|| unknown("request", id))
    }

    /// `(model owner, data owner)` of a quote.
    fn quote_parties(&self, id: u64) -> Result<(AccountId, AccountId), TxRejected> {
        let q = self.quote(id)?;
        Ok((self.request(q.request)?.requester.clone(), q.contributor.clone()))
    }

    /// The deposit escrow that `account` posted for `quote`.
    fn deposit_of(&self, quote: u64, account: &str) -> Option<u64> {
        let request = self.quotes.get(&quote)?.request;
        self.escrows.iter().find_map(|(&id, e)| {
            let matches = match e.condition {
                EscrowCondition::RequestDeposit { request: r } => r == request,
                EscrowCondition::QuoteDeposit { quote: q } => q == quote,
                _ => false,
            };
            (matches && e.holder == account).then_some(id)
        })
    }

    fn require_authority(&self, signer: &str, action: &str) -> Result<(), TxRejected> {
        if self.authorities.contains(signer) {
            Ok(())
        } else {
            Err(TxRejected::Unauthorized {
                signer: signer.into(),
                action: action.into(),
            })
        }
    }
}

fn unauthorized(signer: &str, action: &str) -> TxRejected {
    TxRejected::Unauthorized {
        signer: signer.into(),
        action: action.into(),
    }
}

/// Deterministic transition; the input state is never modified.
pub fn apply_tx(state: &LedgerState, tx: &LedgerTx) -> Result<LedgerState, TxRejected> {
    let mut s = state.clone();
    let signer = tx.signer.as_str();
    if signer.is_empty() {
        return Err(invalid("unsigned transaction"));
    }
    match &tx.payload {
        TxPayload::RegisterData { owner, com_x, com_y } => {
            s.require_authority(signer, "register data")?;
            if s.data_registry.values().any(|d| d.com_x == *com_x || d.com_y == *com_y) {
                return Err(invalid("data commitments already registered"));
            }
            let id = s.fresh_id();
            s.data_registry.insert(
                id,
                DataEntry {
                    owner: owner.clone(),
                    authority: signer.into(),
                    com_x: *com_x,
                    com_y: *com_y,
                },
            );
        }
        TxPayload::RegisterModel {
            owner,
            com_a,
            com_b,
            com_c,
        } => {
            s.require_authority(signer, "register a model")?;
            if s.model_registry
                .values()
                .any(|m| (m.com_a, m.com_b, m.com_c) == (*com_a, *com_b, *com_c))
            {
                return Err(invalid("model commitments already registered"));
            }
            let id = s.fresh_id();
            s.model_registry.insert(
                id,
                ModelEntry {
                    owner: owner.clone(),
                    authority: signer.into(),
                    com_a: *com_a,
                    com_b: *com_b,
                    com_c: *com_c,
                },
            );
        }
        TxPayload::RequestQuote {
            model,
            requirements,
            deposit,
        } => {
            let entry = s.model_registry.get(model).ok_or_else(|| unknown("model", *model))?;
            if entry.owner != signer {
                return Err(unauthorized(signer, "request quotes for a model it does not own"));
            }
            let id = s.fresh_id();
            s.requests.insert(
                id,
                QuoteRequest {
                    requester: signer.into(),
                    model: *model,
                    requirements: requirements.clone(),
                    deposit: *deposit,
                },
            );
            s.lock_funds(signer, *deposit, EscrowCondition::RequestDeposit { request: id })?;
        }
        TxPayload::SubmitQuote {
            request,
            com_x,
            com_y,
            price,
            deposit,
        } => {
            s.request(*request)?;
            let data = s
                .data_registry
                .iter()
                .find(|(_, d)| d.com_x == *com_x && d.com_y == *com_y && d.owner == signer)
                .map(|(&id, _)| id)
                .ok_or_else(|| invalid("quote commitments do not match the registry"))?;
            let id = s.fresh_id();
            s.quotes.insert(
                id,
                Quote {
                    request: *request,
                    contributor: signer.into(),
                    data,
                    price: *price,
                    deposit: *deposit,
                    status: QuoteStatus::Evaluating,
                },
            );
            s.lock_funds(signer, *deposit, EscrowCondition::QuoteDeposit { quote: id })?;
        }
        TxPayload::Escrow { amount, condition } => apply_escrow(&mut s, signer, *amount, condition)?,
        TxPayload::Slash {
            escrow,
            quote,
            evidence,
        } => {
            let (model_owner, data_owner) = s.quote_parties(*quote)?;
            let e = s.escrows.get(escrow).ok_or_else(|| unknown("escrow", *escrow))?;
            let (culprit, victim) = match &evidence.verdict {
                ReplayVerdict::Violation { seq, party, .. } if *seq == evidence.seq => match party {
                    PartyId::P1 => (model_owner, data_owner),
                    PartyId::P2 => (data_owner, model_owner),
                    PartyId::Dealer => return Err(invalid("the dealer holds no escrow")),
                },
                ReplayVerdict::Violation { .. } => return Err(invalid("evidence seq does not match the verdict")),
                ReplayVerdict::Consistent => return Err(invalid("a consistent transcript is no evidence")),
            };
            if signer != victim {
                return Err(unauthorized(signer, "claim another party's compensation"));
            }
            if e.holder != culprit || s.deposit_of(*quote, &culprit) != Some(*escrow) {
                return Err(invalid("escrow is not the blamed party's deposit for this quote"));
            }
            s.settle(*escrow, &victim, EscrowStatus::Slashed)?;
            s.quotes.get_mut(quote).expect("checked").status = QuoteStatus::Slashed;
        }
        TxPayload::PostHashlock {
            hash,
            deadline,
            purpose,
        } => {
            if *deadline <= s.height {
                return Err(invalid("deadline already passed"));
            }
            if let LockPurpose::FinalMessage { quote } = purpose {
                let (a, b) = s.quote_parties(*quote)?;
                if signer != a && signer != b {
                    return Err(unauthorized(signer, "pre-commit for a quote it is not party to"));
                }
                if s.quote(*quote)?.terminal() {
                    return Err(invalid("quote evaluation already closed"));
                }
                if s.deposit_of(*quote, signer).is_none() {
                    return Err(invalid("the last sender has no deposit to forfeit"));
                }
            }
            let id = s.fresh_id();
            s.hashlocks.insert(
                id,
                HashLock {
                    poster: signer.into(),
                    hash: *hash,
                    deadline: *deadline,
                    purpose: purpose.clone(),
                    status: LockStatus::Pending,
                    escrow: None,
                    key: None,
                },
            );
        }
        TxPayload::RevealKey { lock, key } => {
            let height = s.height;
            let l = s
                .hashlocks
                .get(lock)
                .ok_or_else(|| unknown("hash lock", *lock))?
                .clone();
            if l.poster != signer {
                return Err(unauthorized(signer, "reveal another party's key"));
            }
            if height >= l.deadline {
                return Err(invalid(format!("lock {lock} expired at height {}", l.deadline)));
            }
            let bytes = hex::decode(key).map_err(|e| invalid(format!("key is not hex: {e}")))?;
            if lock_hash(&bytes) != l.hash {
                return Err(TxRejected::WrongPreimage { lock: *lock });
            }
            let status = match &l.purpose {
                LockPurpose::Exchange { .. } => {
                    let escrow = match (l.status, l.escrow) {
                        (LockStatus::Funded, Some(e)) => e,
                        _ => return Err(invalid(format!("lock {lock} is not funded"))),
                    };
                    s.settle(escrow, signer, EscrowStatus::Released)?;
                    LockStatus::Settled
                }
                LockPurpose::FinalMessage { quote } => {
                    if l.status != LockStatus::Pending {
                        return Err(invalid(format!("lock {lock} already closed")));
                    }
                    s.quotes.get_mut(quote).ok_or_else(|| unknown("quote", *quote))?.status = QuoteStatus::Scored;
                    LockStatus::Settled
                }
            };
            let l = s.hashlocks.get_mut(lock).expect("checked");
            l.status = status;
            l.key = Some(key.clone());
        }
        TxPayload::Release { escrow } => apply_release(&mut s, signer, *escrow)?,
    }
    Ok(s)
}

fn apply_escrow(s: &mut LedgerState, signer: &str, amount: u64, condition: &EscrowCondition) -> Result<(), TxRejected> {
    match condition {
        EscrowCondition::Payment { lock } => {
            let l = s.hashlocks.get(lock).ok_or_else(|| unknown("hash lock", *lock))?;
            let LockPurpose::Exchange { buyer, price, .. } = &l.purpose else {
                return Err(invalid("only exchange locks take payment"));
            };
            if buyer != signer {
                return Err(unauthorized(signer, "pay into a lock addressed to another buyer"));
            }
            if amount != *price {
                return Err(invalid(format!("payment {amount} differs from price {price}")));
            }
            if l.status != LockStatus::Pending || s.height >= l.deadline {
                return Err(invalid(format!("lock {lock} no longer accepts payment")));
            }
            let id = s.lock_funds(signer, amount, condition.clone())?;
            let l = s.hashlocks.get_mut(lock).expect("checked");
            l.status = LockStatus::Funded;
            l.escrow = Some(id);
        }
        EscrowCondition::ProofFee { quote, challenges } => {
            let (a, b) = s.quote_parties(*quote)?;
            if signer != a && signer != b {
                return Err(unauthorized(signer, "pay proof fees for a quote it is not party to"));
            }
            let due = s
                .proof_fee
                .checked_mul(*challenges)
                .ok_or_else(|| invalid("proof fee overflows"))?;
            if amount != due {
                return Err(invalid(format!("{challenges} challenges cost {due}, got {amount}")));
            }
            s.lock_funds(signer, amount, condition.clone())?;
        }
        EscrowCondition::RequestDeposit { .. } | EscrowCondition::QuoteDeposit { .. } => {
            return Err(invalid("deposits are posted with their request or quote"));
        }
    }
    Ok(())
}

fn apply_release(s: &mut LedgerState, signer: &str, id: u64) -> Result<(), TxRejected> {
    let e = s.escrows.get(&id).ok_or_else(|| unknown("escrow", id))?.clone();
    if e.status != EscrowStatus::Open {
        return Err(invalid(format!("escrow {id} is already {:?}", e.status).to_lowercase()));
    }
    match e.condition {
        EscrowCondition::RequestDeposit { request } => {
            if signer != e.holder {
                return Err(unauthorized(signer, "release another party's deposit"));
            }
            if s.quotes.values().any(|q| q.request == request && !q.terminal()) {
                return Err(invalid("quotes under this request are still being evaluated"));
            }
            s.settle(id, signer, EscrowStatus::Released)
        }
        EscrowCondition::QuoteDeposit { quote } => {
            if signer != e.holder {
                return Err(unauthorized(signer, "release another party's deposit"));
            }
            if !s.quote(quote)?.terminal() {
                return Err(invalid(format!("quote {quote} is still being evaluated")));
            }
            s.settle(id, signer, EscrowStatus::Released)
        }
        EscrowCondition::Payment { lock } => {
            let l = s.hashlocks.get(&lock).ok_or_else(|| unknown("hash lock", lock))?;
            if signer != e.holder {
                return Err(unauthorized(signer, "claim a refund for another buyer"));
            }
            if s.height < l.deadline {
                return Err(invalid(format!("lock {lock} refunds from height {}", l.deadline)));
            }
            s.settle(id, signer, EscrowStatus::Released)?;
            s.hashlocks.get_mut(&lock).expect("checked").status = LockStatus::Refunded;
            Ok(())
        }
        EscrowCondition::ProofFee { quote, .. } => {
            let (a, b) = s.quote_parties(quote)?;
            let prover = if e.holder == a { b } else { a };
            if signer != prover {
                return Err(unauthorized(signer, "claim a proof fee it did not earn"));
            }
            s.settle(id, &prover, EscrowStatus::Released)
        }
    }
}

/// Settles the fairness pre-commitment `lock` once its deadline has passed:
/// a revealed final message is fine, otherwise the committing party's
/// deposit goes to the counterparty.
pub fn fairness_hook(state: &mut LedgerState, lock: u64) -> Result<FairnessOutcome, TxRejected> {
    let l = state
        .hashlocks
        .get(&lock)
        .ok_or_else(|| unknown("hash lock", lock))?
        .clone();
    let LockPurpose::FinalMessage { quote } = l.purpose else {
        return Err(invalid(format!("lock {lock} is not a final-message commitment")));
    };
    match l.status {
        LockStatus::Settled => return Ok(FairnessOutcome::Ok),
        LockStatus::Pending => {}
        other => return Err(invalid(format!("lock {lock} is already {other:?}").to_lowercase())),
    }
    if state.height < l.deadline {
        return Err(invalid(format!("lock {lock} is open until height {}", l.deadline)));
    }
    let (a, b) = state.quote_parties(quote)?;
    let to = if l.poster == a { b } else { a };
    let escrow = state
        .deposit_of(quote, &l.poster)
        .ok_or_else(|| invalid("the committing party has no deposit"))?;
    let amount = state.escrows[&escrow].amount;
    let mut next = state.clone();
    next.settle(escrow, &to, EscrowStatus::Slashed)?;
    next.hashlocks.get_mut(&lock).expect("checked").status = LockStatus::Expired;
    next.quotes.get_mut(&quote).expect("checked").status = QuoteStatus::Slashed;
    *state = next;
    Ok(FairnessOutcome::Slashed { escrow, to, amount })
}

/// Terms of a step-7 sale.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeTerms {
    pub seller: AccountId,
    pub buyer: AccountId,
    pub ciphertext_ref: String,
    pub hash: Digest,
    pub price: u64,
    pub deadline: u64,
}

/// Runs a hash-locked sale: the seller posts `H(k)`, the buyer escrows the
/// price, and the seller reveals `key` at height `reveal_at` (if given).
/// A rejected or missing reveal ends in a refund at the deadline.
pub fn hashlock_exchange(
    state: &mut LedgerState,
    terms: &ExchangeTerms,
    reveal: Option<(u64, &[u8])>,
) -> Result<ExchangeOutcome, TxRejected> {
    let lock = state.next_id;
    state.apply(&LedgerTx::new(
        terms.seller.clone(),
        TxPayload::PostHashlock {
            hash: terms.hash,
            deadline: terms.deadline,
            purpose: LockPurpose::Exchange {
                buyer: terms.buyer.clone(),
                ciphertext_ref: terms.ciphertext_ref.clone(),
                price: terms.price,
            },
        },
    ))?;
    let escrow = state.next_id;
    state.apply(&LedgerTx::new(
        terms.buyer.clone(),
        TxPayload::Escrow {
            amount: terms.price,
            condition: EscrowCondition::Payment { lock },
        },
    ))?;
    if let Some((at, key)) = reveal {
        state.advance(at.saturating_sub(state.height));
        let tx = LedgerTx::new(
            terms.seller.clone(),
            TxPayload::RevealKey {
                lock,
                key: hex::encode(key),
            },
        );
        if state.apply(&tx).is_ok() {
            return Ok(ExchangeOutcome::Settled { lock });
        }
    }
    state.advance(terms.deadline.saturating_sub(state.height));
    state.apply(&LedgerTx::new(terms.buyer.clone(), TxPayload::Release { escrow }))?;
    Ok(ExchangeOutcome::Refunded { lock })
}
