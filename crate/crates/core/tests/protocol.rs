use privade_core::fixtures::{build_fixture, Fixture, FixtureSpec};
use privade_core::protocol::{
    f_score_reference, run_privade, scan_leakage, transcript_replay, AbortCause, MessageKind, ReplayPublic,
    ReplayVerdict, RunOutcome, Stage, Transcript, Transport, ADVERSARY_CATALOGUE,
};
use privade_core::scoring::score_multi_oracle;

fn toy(seed: u64) -> Fixture {
    build_fixture(&FixtureSpec {
        arch: "toy".into(),
        n: 120,
        k: 12,
        seed,
        projection_dim: None,
    })
    .unwrap()
}

fn honest(fx: &Fixture) -> RunOutcome {
    run_privade(fx.alice.clone(), fx.bob.clone(), &fx.config, &Transport::InProc).unwrap_or_else(|e| panic!("{e}"))
}

#[test]
fn honest_run_matches_oracle_and_reference() {
    for seed in 1..4 {
        let fx = toy(seed);
        let out = honest(&fx);
        let mut scoring = fx.config.scoring;
        scoring.projection = fx.projection();
        let oracle = score_multi_oracle(&fx.split, &fx.dataset, fx.config.k, &scoring).unwrap();
        let reference = f_score_reference(&fx.alice, &fx.bob, &fx.config).unwrap();
        assert_eq!(out.phi_p1, out.phi_p2);
        assert_eq!(out.report, oracle);
        assert_eq!(reference, oracle);
    }
}

#[test]
fn projected_selection_run_matches_oracle() {
    let fx = build_fixture(&FixtureSpec {
        arch: "toy".into(),
        n: 100,
        k: 10,
        seed: 7,
        projection_dim: Some(2),
    })
    .unwrap();
    let out = honest(&fx);
    let mut scoring = fx.config.scoring;
    scoring.projection = fx.projection();
    let oracle = score_multi_oracle(&fx.split, &fx.dataset, fx.config.k, &scoring).unwrap();
    assert_eq!(out.report, oracle);
    let kinds: Vec<_> = out.transcript.messages.iter().map(|m| m.kind).collect();
    assert_eq!(kinds.iter().filter(|&&k| k == MessageKind::CoinReveal).count(), 2);
}

#[test]
fn lenetxs_run_matches_oracle() {
    let fx = build_fixture(&FixtureSpec {
        arch: "lenetxs".into(),
        n: 60,
        k: 10,
        seed: 3,
        projection_dim: None,
    })
    .unwrap();
    let out = honest(&fx);
    let oracle = score_multi_oracle(&fx.split, &fx.dataset, fx.config.k, &fx.config.scoring).unwrap();
    assert_eq!(out.report, oracle);
}

#[test]
fn honest_transcript_replays_and_does_not_leak() {
    let fx = toy(5);
    let out = honest(&fx);
    let public = ReplayPublic {
        config: fx.config.clone(),
    };
    assert_eq!(
        transcript_replay(&out.transcript, &public).unwrap(),
        ReplayVerdict::Consistent
    );
    assert!(scan_leakage(&out.transcript, &fx.alice, &fx.bob).is_empty());
    let again = honest(&fx);
    assert_eq!(again.transcript.to_bytes(), out.transcript.to_bytes());
    let parsed = Transcript::from_bytes(&out.transcript.to_bytes()).unwrap();
    assert_eq!(parsed, out.transcript);
}

#[test]
fn leakage_scanner_flags_a_planted_feature() {
    let fx = toy(6);
    let mut out = honest(&fx);
    // Route P2's dealer input to P1 instead.
    let m = out
        .transcript
        .messages
        .iter_mut()
        .find(|m| m.kind == MessageKind::DealerInput && m.sender == privade_core::protocol::PartyId::P2)
        .unwrap();
    m.recipient = privade_core::protocol::PartyId::P1;
    let found = scan_leakage(&out.transcript, &fx.alice, &fx.bob);
    assert!(found.iter().any(|f| f.secret.starts_with("x[")), "{found:?}");
}

#[test]
fn every_adversary_aborts_as_expected() {
    let fx = toy(2);
    for adv in ADVERSARY_CATALOGUE {
        let (mut alice, mut bob) = (fx.alice.clone(), fx.bob.clone());
        match adv.party() {
            privade_core::protocol::PartyId::P1 => alice.adversary = Some(adv),
            _ => bob.adversary = Some(adv),
        }
        let err = run_privade(alice, bob, &fx.config, &Transport::InProc).expect_err(adv.name());
        let abort = err.abort().unwrap_or_else(|| panic!("{adv}: {err}"));
        assert_eq!((abort.stage, abort.cause), adv.expected_abort(), "{adv}: {abort}");
        let t = err.transcript().unwrap();
        assert_eq!(t.messages.last().unwrap().kind, MessageKind::Abort);
    }
}

#[test]
fn deviating_transcripts_are_flagged_by_replay() {
    use privade_core::protocol::Adversary::*;
    let fx = toy(2);
    let public = ReplayPublic {
        config: fx.config.clone(),
    };
    for adv in [
        BobBadCpOpening,
        BobForgedAb,
        BobForgedBProof,
        AliceBadComCOpening,
        AliceForgedCProof,
        BobReplayCommitments,
    ] {
        let (mut alice, mut bob) = (fx.alice.clone(), fx.bob.clone());
        match adv.party() {
            privade_core::protocol::PartyId::P1 => alice.adversary = Some(adv),
            _ => bob.adversary = Some(adv),
        }
        let err = run_privade(alice, bob, &fx.config, &Transport::InProc).unwrap_err();
        let verdict = transcript_replay(err.transcript().unwrap(), &public).unwrap();
        match verdict {
            ReplayVerdict::Violation { party, .. } => assert_eq!(party, adv.party(), "{adv}"),
            v => panic!("{adv}: {v:?}"),
        }
    }
}

#[test]
fn bit_flips_in_proofs_are_located() {
    let fx = toy(8);
    let out = honest(&fx);
    let public = ReplayPublic {
        config: fx.config.clone(),
    };
    let proofs: Vec<usize> = out
        .transcript
        .messages
        .iter()
        .enumerate()
        .filter(|(_, m)| m.kind == MessageKind::Proof)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(proofs.len(), 3);
    for &i in &proofs {
        let len = out.transcript.messages[i].body.len();
        for bit in (0..len * 8).step_by(len * 8 / 97 + 1) {
            let mut t = out.transcript.clone();
            t.messages[i].body[bit / 8] ^= 1 << (bit % 8);
            match transcript_replay(&t, &public).unwrap() {
                ReplayVerdict::Violation { seq, .. } => assert_eq!(seq, i as u64, "bit {bit} of message {i}"),
                ReplayVerdict::Consistent => panic!("bit {bit} of message {i} went unnoticed"),
            }
        }
    }
}

#[test]
fn reordered_messages_violate_ordering() {
    let fx = toy(9);
    let out = honest(&fx);
    let mut t = out.transcript.clone();
    t.messages.swap(3, 4);
    let public = ReplayPublic {
        config: fx.config.clone(),
    };
    assert!(matches!(
        transcript_replay(&t, &public).unwrap(),
        ReplayVerdict::Violation { seq: 4, .. }
    ));
}

#[test]
fn socket_transport_matches_in_process_run() {
    let fx = toy(4);
    let local = honest(&fx);
    let remote = run_privade(
        fx.alice.clone(),
        fx.bob.clone(),
        &fx.config,
        &Transport::socket_threads("127.0.0.1:0"),
    )
    .unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(remote.report, local.report);
    assert_eq!(remote.transcript, local.transcript);
}

#[test]
fn socket_transport_reports_aborts() {
    let fx = toy(4);
    let mut bob = fx.bob.clone();
    bob.adversary = Some(privade_core::protocol::Adversary::BobDealerBadX);
    let err = run_privade(
        fx.alice.clone(),
        bob,
        &fx.config,
        &Transport::socket_threads("127.0.0.1:0"),
    )
    .unwrap_err();
    let abort = err.abort().unwrap();
    assert_eq!((abort.stage, abort.cause), (Stage::Infer, AbortCause::DealerAbort));
}

#[test]
fn reference_aborts_on_too_many_uncovered_challenges() {
    let mut fx = toy(3);
    fx.config.d = privade_core::FixedScalar::from_raw(1);
    let err = f_score_reference(&fx.alice, &fx.bob, &fx.config).unwrap_err();
    assert_eq!(err.cause, AbortCause::DPrimeCheck);
    // With k = n every point covers itself, so only the challenge rule applies.
    fx.config.k = fx.dataset.len();
    assert!(f_score_reference(&fx.alice, &fx.bob, &fx.config).is_ok());
}
