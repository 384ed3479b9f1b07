mod common;

use std::collections::BTreeMap;

use privade_core::market::{
    demo_script, fairness_hook, run_script, DemoScenario, EscrowStatus, LedgerState, Script, Step,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Applies one step; rejected steps must leave the state untouched.
fn step(state: &mut LedgerState, s: &Step) -> bool {
    let before = state.clone();
    let ok = match s {
        Step::Tx(tx) => state.apply(tx).is_ok(),
        Step::Advance(b) => {
            state.advance(*b);
            true
        }
        Step::FairnessHook(lock) => fairness_hook(state, *lock).is_ok(),
    };
    if !ok {
        assert_eq!(*state, before, "rejected step changed the state: {s:?}");
    }
    ok
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_is_conserved(seed in any::<u64>(), len in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = common::genesis();
        let total = state.total_value();
        for _ in 0..len {
            let s = common::random_step(&mut rng, &state);
            step(&mut state, &s);
            prop_assert_eq!(state.total_value(), total);
        }
    }

    #[test]
    fn escrows_close_exactly_once(seed in any::<u64>(), len in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = common::genesis();
        let mut closed: BTreeMap<u64, EscrowStatus> = BTreeMap::new();
        for _ in 0..len {
            let s = common::random_step(&mut rng, &state);
            step(&mut state, &s);
            for (&id, e) in &state.escrows {
                match closed.get(&id) {
                    Some(&st) => prop_assert_eq!(e.status, st, "escrow {} reopened or re-closed", id),
                    None if e.status != EscrowStatus::Open => {
                        closed.insert(id, e.status);
                    }
                    None => {}
                }
            }
        }
    }

    #[test]
    fn registry_entries_never_change(seed in any::<u64>(), len in 1usize..150) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = common::genesis();
        for _ in 0..len {
            let data = state.data_registry.clone();
            let models = state.model_registry.clone();
            let s = common::random_step(&mut rng, &state);
            step(&mut state, &s);
            for (id, e) in &data {
                prop_assert_eq!(state.data_registry.get(id), Some(e));
            }
            for (id, e) in &models {
                prop_assert_eq!(state.model_registry.get(id), Some(e));
            }
        }
    }
}

#[test]
fn random_sessions_do_accept_transactions() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut state = common::genesis();
    let accepted = (0..2000)
        .filter(|_| {
            let s = common::random_step(&mut rng, &state);
            matches!(s, Step::Tx(_)) && step(&mut state, &s)
        })
        .count();
    assert!(accepted > 300, "only {accepted} accepted");
    assert!(state.escrows.values().any(|e| e.status == EscrowStatus::Slashed));
}

#[test]
fn honest_demo_conserves_and_settles() {
    let script = demo_script(DemoScenario::Honest);
    let out = run_script(&script).unwrap();
    let initial: u64 = script.genesis.accounts.values().sum();
    assert_eq!(out.state.total_value(), initial);
    assert_eq!(out.state.escrowed(), 0);
}

#[test]
fn tx_log_is_ndjson() {
    let out = run_script(&demo_script(DemoScenario::WithheldKey)).unwrap();
    for (i, line) in out.log_ndjson().lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["index"], i);
    }
}

#[test]
fn script_files_parse() {
    let json = demo_script(DemoScenario::Honest).to_json();
    let parsed = Script::from_json(&json).unwrap();
    assert_eq!(
        run_script(&parsed).unwrap().state,
        run_script(&demo_script(DemoScenario::Honest)).unwrap().state
    );
    assert!(Script::from_json("{\"genesis\": 3}").is_err());
}
