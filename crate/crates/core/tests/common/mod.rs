#![allow(dead_code)]

use privade_core::commitments::{hash_parts, Digest};
use privade_core::market::{lock_hash, EscrowCondition, Evidence, LedgerState, LedgerTx, LockPurpose, Step, TxPayload};
use privade_core::protocol::{PartyId, ReplayVerdict};
use rand::seq::SliceRandom;
use rand::Rng;

pub const USERS: [&str; 3] = ["alice", "bob", "carol"];
pub const AUTHORITY: &str = "authority";

pub fn genesis() -> LedgerState {
    LedgerState::genesis(
        [
            ("alice".into(), 5000),
            ("bob".into(), 3000),
            ("carol".into(), 2000),
            (AUTHORITY.into(), 0),
        ],
        [AUTHORITY.to_string()],
        128,
        3,
    )
}

fn tag(i: u64) -> Digest {
    hash_parts(&[b"gen", &i.to_le_bytes()])
}

fn key(i: u64) -> Vec<u8> {
    i.to_le_bytes().to_vec()
}

fn pick_id<R: Rng>(rng: &mut R, state: &LedgerState) -> u64 {
    if state.next_id == 0 || rng.gen_bool(0.05) {
        rng.gen_range(0..state.next_id + 3)
    } else {
        rng.gen_range(0..state.next_id)
    }
}

/// A step that is plausible in `state`: mostly well-targeted, sometimes not.
pub fn random_step<R: Rng>(rng: &mut R, state: &LedgerState) -> Step {
    let user = *USERS.choose(rng).unwrap();
    let other: &str = USERS
        .iter()
        .copied()
        .filter(|&u| u != user)
        .collect::<Vec<_>>()
        .choose(rng)
        .unwrap();
    let amount = |rng: &mut R| rng.gen_range(0..400u64);
    let id = pick_id(rng, state);
    let secret = rng.gen_range(0..8u64);
    let tx = |signer: &str, payload| Step::Tx(LedgerTx::new(signer, payload));
    match rng.gen_range(0..14) {
        0 => tx(
            if rng.gen_bool(0.9) { AUTHORITY } else { user },
            TxPayload::RegisterData {
                owner: user.into(),
                com_x: tag(rng.gen()),
                com_y: tag(rng.gen()),
            },
        ),
        1 => tx(
            AUTHORITY,
            TxPayload::RegisterModel {
                owner: user.into(),
                com_a: tag(rng.gen()),
                com_b: tag(1),
                com_c: tag(2),
            },
        ),
        2 => {
            let model = state
                .model_registry
                .iter()
                .find(|(_, m)| m.owner == user)
                .map(|(&i, _)| i)
                .unwrap_or(id);
            tx(
                user,
                TxPayload::RequestQuote {
                    model,
                    requirements: "r".into(),
                    deposit: amount(rng),
                },
            )
        }
        3 => {
            let (com_x, com_y) = state
                .data_registry
                .values()
                .find(|d| d.owner == user)
                .map(|d| (d.com_x, d.com_y))
                .unwrap_or((tag(0), tag(0)));
            let request = state
                .requests
                .keys()
                .copied()
                .collect::<Vec<_>>()
                .choose(rng)
                .copied()
                .unwrap_or(id);
            tx(
                user,
                TxPayload::SubmitQuote {
                    request,
                    com_x,
                    com_y,
                    price: amount(rng),
                    deposit: amount(rng),
                },
            )
        }
        4 => {
            let challenges = rng.gen_range(0..30);
            let exact = state.proof_fee * challenges;
            let amount = if rng.gen_bool(0.8) { exact } else { exact + 1 };
            tx(
                user,
                TxPayload::Escrow {
                    amount,
                    condition: EscrowCondition::ProofFee { quote: id, challenges },
                },
            )
        }
        5 => {
            let lock = state
                .hashlocks
                .keys()
                .copied()
                .collect::<Vec<_>>()
                .choose(rng)
                .copied()
                .unwrap_or(id);
            let price = match state.hashlocks.get(&lock).map(|l| &l.purpose) {
                Some(LockPurpose::Exchange { price, .. }) => *price,
                _ => amount(rng),
            };
            tx(
                user,
                TxPayload::Escrow {
                    amount: price,
                    condition: EscrowCondition::Payment { lock },
                },
            )
        }
        6 => {
            let party = if rng.gen_bool(0.5) { PartyId::P1 } else { PartyId::P2 };
            let seq = rng.gen_range(0..20);
            let verdict = ReplayVerdict::Violation {
                seq,
                party,
                reason: "generated".into(),
            };
            let quote = state
                .quotes
                .keys()
                .copied()
                .collect::<Vec<_>>()
                .choose(rng)
                .copied()
                .unwrap_or(id);
            // Aim at the blamed party's deposit, signed by the counterparty.
            let (escrow, signer) = match state.quotes.get(&quote) {
                Some(q) if rng.gen_bool(0.8) => {
                    let requester = state.requests[&q.request].requester.clone();
                    let (culprit, victim) = match party {
                        PartyId::P1 => (requester, q.contributor.clone()),
                        _ => (q.contributor.clone(), requester),
                    };
                    let deposit = state
                        .escrows
                        .iter()
                        .rev()
                        .find(|(_, e)| e.holder == culprit)
                        .map(|(&i, _)| i);
                    (deposit.unwrap_or(id), victim)
                }
                _ => (id, user.to_string()),
            };
            tx(
                &signer,
                TxPayload::Slash {
                    escrow,
                    quote,
                    evidence: Evidence { seq, verdict },
                },
            )
        }
        7 | 8 => {
            let purpose = if rng.gen_bool(0.5) {
                LockPurpose::Exchange {
                    buyer: other.into(),
                    ciphertext_ref: "cid".into(),
                    price: amount(rng),
                }
            } else {
                let quote = state
                    .quotes
                    .keys()
                    .copied()
                    .collect::<Vec<_>>()
                    .choose(rng)
                    .copied()
                    .unwrap_or(id);
                LockPurpose::FinalMessage { quote }
            };
            tx(
                user,
                TxPayload::PostHashlock {
                    hash: lock_hash(&key(secret)),
                    deadline: state.height + rng.gen_range(0..10),
                    purpose,
                },
            )
        }
        9 => {
            let (lock, signer) = state
                .hashlocks
                .iter()
                .map(|(&i, l)| (i, l.poster.clone()))
                .collect::<Vec<_>>()
                .choose(rng)
                .cloned()
                .unwrap_or((id, user.into()));
            tx(
                &signer,
                TxPayload::RevealKey {
                    lock,
                    key: hex::encode(key(secret)),
                },
            )
        }
        10 | 11 => {
            let (escrow, signer) = state
                .escrows
                .iter()
                .map(|(&i, e)| (i, e.holder.clone()))
                .collect::<Vec<_>>()
                .choose(rng)
                .cloned()
                .unwrap_or((id, user.into()));
            let signer = if rng.gen_bool(0.7) { signer } else { other.to_string() };
            tx(&signer, TxPayload::Release { escrow })
        }
        12 => Step::Advance(rng.gen_range(1..4)),
        _ => Step::FairnessHook(
            state
                .hashlocks
                .keys()
                .copied()
                .collect::<Vec<_>>()
                .choose(rng)
                .copied()
                .unwrap_or(id),
        ),
    }
}
