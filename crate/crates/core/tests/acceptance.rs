//! Acceptance suite: one PASS/FAIL line per criterion, each checked against
//! its tolerance and wall-clock limit. Runs with `harness = false`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use privade_core::audit::{
    cnczk_challenge, cnczk_verify, commit_points, cp_rejection_probability, cp_required_successes, cp_run,
    cp_sample_size, detection_probability, detection_probability_exact, simulate_detection, AuditPlan, CnczkProver,
    CnczkPublic, Variant,
};
use privade_core::commitments::{
    commit, mt_commit, mt_open, mt_verify, open, setup_com, CommitParams, Digest, MerklePath, Side,
};
use privade_core::fixtures::{build_fixture, FixtureSpec};
use privade_core::market::{
    demo_script, fairness_hook, run_script, DemoScenario, EscrowStatus, FairnessOutcome, LockStatus, Step,
};
use privade_core::model_split::{full_trace, split_model, Architecture};
use privade_core::numerics::squared_distance;
use privade_core::protocol::{run_privade, PartyId, Transport, ADVERSARY_CATALOGUE};
use privade_core::scoring::score_multi_oracle;
use privade_core::selection::{jl_project, ProjectionMatrix, RepresentativeSet};
use privade_core::{FixedScalar, FixedTensor, Layer, LayerKind, Model};

type Outcome = Result<String, String>;

/// Name, time limit in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ratio(a: u64, b: u64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

const REFERENCE_PLAN: AuditPlan = AuditPlan {
    n: 100,
    l: 10,
    m: 25,
    s: 6,
    rho: 0.1,
};

fn detection_bound() -> Outcome {
    let exact = detection_probability_exact(&REFERENCE_PLAN).map_err(|e| e.to_string())?;
    let bound = exact.to_f64().unwrap();
    ensure(exact > ratio(4, 5), || {
        format!("exact bound {bound:.6} is not above 0.8")
    })?;
    let trials = 100_000;
    let workers = 8u64;
    let caught: f64 = (0..workers)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha20Rng::seed_from_u64(0xc1 + w);
            simulate_detection(&REFERENCE_PLAN, trials / workers as usize, &mut rng).unwrap()
        })
        .sum::<f64>()
        / workers as f64;
    ensure((caught - bound).abs() <= 0.02 && caught >= bound - 0.03, || {
        format!("simulated {caught:.4} vs bound {bound:.4}")
    })?;
    Ok(format!("bound {bound:.6}, simulated {caught:.4} over {trials} trials"))
}

fn audit_budget() -> Outcome {
    let f = REFERENCE_PLAN.audit_fraction();
    ensure(f == ratio(3, 20), || format!("audit fraction {f}"))?;
    Ok(format!("m·s/(N·L) = {f}"))
}

fn random_spec(rng: &mut ChaCha20Rng) -> FixtureSpec {
    let arch = ["lenetxs", "lenet5", "cnn5"][rng.gen_range(0..3)];
    FixtureSpec {
        arch: arch.into(),
        n: rng.gen_range(100..=1000),
        k: rng.gen_range(10..=50),
        seed: rng.gen(),
        projection_dim: rng.gen_bool(0.5).then(|| rng.gen_range(8..=64)),
    }
}

fn protocol_equals_oracle() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0xacc3);
    let specs: Vec<FixtureSpec> = (0..50).map(|_| random_spec(&mut rng)).collect();
    let mismatches: Vec<String> = specs
        .par_iter()
        .filter_map(|spec| {
            let check = || -> Result<bool, String> {
                let fx = build_fixture(spec).map_err(|e| e.to_string())?;
                let out = run_privade(fx.alice.clone(), fx.bob.clone(), &fx.config, &Transport::InProc)
                    .map_err(|e| e.to_string())?;
                let mut scoring = fx.config.scoring;
                scoring.projection = fx.projection();
                let oracle =
                    score_multi_oracle(&fx.split, &fx.dataset, fx.config.k, &scoring).map_err(|e| e.to_string())?;
                Ok(out.phi_p1 == oracle.phi && out.phi_p2 == oracle.phi)
            };
            match check() {
                Ok(true) => None,
                Ok(false) => Some(format!("{spec:?}: φ differs")),
                Err(e) => Some(format!("{spec:?}: {e}")),
            }
        })
        .collect();
    ensure(mismatches.is_empty(), || mismatches.join("; "))?;
    let archs = |a: &str| specs.iter().filter(|s| s.arch == a).count();
    Ok(format!(
        "50 fixtures ({} lenetxs, {} lenet5, {} cnn5) match bit-exactly",
        archs("lenetxs"),
        archs("lenet5"),
        archs("cnn5")
    ))
}

fn catalogue_aborts() -> Result<usize, String> {
    let fixtures = [("toy", 120, 12), ("lenetxs", 100, 10)].map(|(arch, n, k)| {
        build_fixture(&FixtureSpec {
            arch: arch.into(),
            n,
            k,
            seed: 11,
            projection_dim: None,
        })
        .unwrap()
    });
    let mut runs = 0;
    for fx in &fixtures {
        for adv in ADVERSARY_CATALOGUE {
            let (mut alice, mut bob) = (fx.alice.clone(), fx.bob.clone());
            match adv.party() {
                PartyId::P1 => alice.adversary = Some(adv),
                _ => bob.adversary = Some(adv),
            }
            match run_privade(alice, bob, &fx.config, &Transport::InProc) {
                Ok(out) => return Err(format!("{adv} on {} finished with φ = {}", fx.spec.arch, out.phi_p1)),
                Err(e) if e.abort().is_none() => return Err(format!("{adv}: failed without an abort: {e}")),
                Err(_) => runs += 1,
            }
        }
    }
    Ok(runs)
}

/// Line dataset with 70 covered points and 30 far outliers.
fn cp_catch_rate(trials: usize) -> Result<(f64, f64), String> {
    let n = 100;
    let uncovered = 30;
    let num_challenges = 20;
    let delta = 0.05;
    let pp = CommitParams::default();
    let xs: Vec<FixedTensor> = (0..n)
        .map(|i| {
            let v = if i < n - uncovered {
                i as f64
            } else {
                1000.0 + 10.0 * i as f64
            };
            FixedTensor::from_f64(vec![1], &[v]).unwrap()
        })
        .collect();
    let rep = RepresentativeSet::new((0..n - uncovered).collect(), n).map_err(|e| e.to_string())?;
    let d = FixedScalar::from_f64(1.0);
    let mut rng = ChaCha20Rng::seed_from_u64(0xc4);
    let (coms, rs) = commit_points(&pp, &xs, &mut rng);
    let tolerated = num_challenges - cp_required_successes(num_challenges, delta);
    let bound = cp_rejection_probability(n, uncovered, num_challenges, tolerated)
        .to_f64()
        .unwrap();
    let mut rejected = 0;
    for _ in 0..trials {
        let run = cp_run(&mut rng, &pp, &xs, &coms, &rs, &rep, d, delta, num_challenges).map_err(|e| e.to_string())?;
        rejected += !run.verdict.accepted as usize;
    }
    Ok((rejected as f64 / trials as f64, bound))
}

/// Five linear/ReLU pairs on 4-vectors.
fn ten_layer_block(rng: &mut ChaCha20Rng) -> Model {
    let mut layers = Vec::new();
    for _ in 0..5 {
        let w: Vec<f64> = (0..16).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.1..0.1)).collect();
        layers.push(
            Layer::new(
                LayerKind::Linear {
                    in_features: 4,
                    out_features: 4,
                },
                vec![
                    FixedTensor::from_f64(vec![4, 4], &w).unwrap(),
                    FixedTensor::from_f64(vec![4], &b).unwrap(),
                ],
            )
            .unwrap(),
        );
        layers.push(Layer::parameterless(LayerKind::Relu));
    }
    Model::new(vec![4], layers).unwrap()
}

/// Corrupts `floor(Nρ)` points, one uniformly chosen layer each, and audits
/// with the reference plan through real commitments and openings.
fn cnczk_catch_rate(trials: usize) -> Result<(f64, f64), String> {
    let AuditPlan { n, l, m, s, .. } = REFERENCE_PLAN;
    let pp = CommitParams::default();
    let mut rng = ChaCha20Rng::seed_from_u64(0xc5);
    let model = ten_layer_block(&mut rng);
    let kinds: Vec<LayerKind> = model.layers.iter().map(|x| x.kind.clone()).collect();
    let xs: Vec<FixedTensor> = (0..n)
        .map(|_| FixedTensor::from_f64(vec![4], &(0..4).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap())
        .collect();
    let honest = full_trace(&model, &xs).map_err(|e| e.to_string())?;
    let public = CnczkPublic {
        variant: Variant::HiddenWeights,
        points: n,
        layer_kinds: &kinds,
        layers: None,
        inputs: Some(&xs),
        outputs: None,
        input_commitments: None,
        output_commitments: None,
    };
    let bound = detection_probability(&REFERENCE_PLAN).map_err(|e| e.to_string())?;
    let workers = 8u64;
    let caught: usize = (0..workers)
        .into_par_iter()
        .map(|w| -> Result<usize, String> {
            let mut rng = ChaCha20Rng::seed_from_u64(0xc50 + w);
            let mut caught = 0;
            for _ in 0..trials / workers as usize {
                let mut trace = honest.clone();
                for i in sample(&mut rng, n, REFERENCE_PLAN.corrupted()) {
                    let layer = rng.gen_range(1..=l);
                    let good = &trace.levels[layer][i];
                    let bumped = good
                        .data()
                        .iter()
                        .map(|v| FixedScalar::from_raw(v.raw().wrapping_add(1 << 12)));
                    trace.levels[layer][i] = FixedTensor::new(good.shape().to_vec(), bumped.collect()).unwrap();
                    for next in layer + 1..=l {
                        trace.levels[next][i] = model.layers[next - 1].forward(&trace.levels[next - 1][i]).unwrap();
                    }
                }
                let prover = CnczkProver::from_trace(&pp, Variant::HiddenWeights, model.layers.clone(), trace, None)
                    .map_err(|e| e.to_string())?;
                let challenge = cnczk_challenge(&mut rng, n, l, m, s).map_err(|e| e.to_string())?;
                let proof = prover.prove(&challenge).map_err(|e| e.to_string())?;
                caught += cnczk_verify(&pp, &public, &prover.commitment(), &challenge, &proof).is_err() as usize;
            }
            Ok(caught)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok((caught as f64 / trials as f64, bound))
}

fn adversaries() -> Outcome {
    let runs = catalogue_aborts()?;
    let trials = 10_000;
    let (cp_rate, cp_bound) = cp_catch_rate(trials)?;
    ensure(cp_rate >= cp_bound - 0.03, || {
        format!("CP caught {cp_rate:.4}, bound {cp_bound:.4}")
    })?;
    let (zk_rate, zk_bound) = cnczk_catch_rate(trials)?;
    ensure(zk_rate >= zk_bound - 0.03, || {
        format!("CnCZK caught {zk_rate:.4}, bound {zk_bound:.4}")
    })?;
    Ok(format!(
        "{runs} scripted runs aborted; CP caught {cp_rate:.4} (bound {cp_bound:.4}); CnCZK caught {zk_rate:.4} (bound {zk_bound:.4})"
    ))
}

/// A prover with `floor(δn) + 1` uncovered points, challenged on
/// `ceil(2 ln n / δ)` indices. Every failed proof is fatal.
fn cp_sample_size_law() -> Outcome {
    let n = 1000;
    let delta = 0.1;
    let challenges = cp_sample_size(n as f64, delta, 2.0).map_err(|e| e.to_string())?;
    let uncovered = (delta * n as f64) as usize + 1;
    let pp = CommitParams::default();
    let xs: Vec<FixedTensor> = (0..n)
        .map(|i| {
            let v = if i < n - uncovered {
                (i % 50) as f64
            } else {
                500.0 + i as f64
            };
            FixedTensor::from_f64(vec![1], &[v]).unwrap()
        })
        .collect();
    let rep = RepresentativeSet::new((0..50).collect(), n).map_err(|e| e.to_string())?;
    let d = FixedScalar::from_f64(0.5);
    let mut rng = ChaCha20Rng::seed_from_u64(0xc6);
    let (coms, rs) = commit_points(&pp, &xs, &mut rng);
    let trials = 10_000;
    let (mut strict, mut tolerant) = (0, 0);
    for _ in 0..trials {
        let run = cp_run(&mut rng, &pp, &xs, &coms, &rs, &rep, d, 0.0, challenges).map_err(|e| e.to_string())?;
        strict += !run.verdict.accepted as usize;
        tolerant += (run.verdict.successes < cp_required_successes(challenges, delta)) as usize;
    }
    let strict = strict as f64 / trials as f64;
    let tolerant = tolerant as f64 / trials as f64;
    let target = 1.0 - 1.0 / n as f64;
    ensure(strict >= target, || format!("rejected {strict:.4} < {target}"))?;
    Ok(format!(
        "|I| = {challenges}, {uncovered} uncovered: rejected {strict:.4} (≥ {target}); with δ|I| failures tolerated {tolerant:.4}"
    ))
}

fn tamper(rng: &mut ChaCha20Rng, root: &mut Digest, index: &mut usize, leaf: &mut Vec<u8>, path: &mut MerklePath) {
    let flip = |d: &mut Digest, rng: &mut ChaCha20Rng| d.0[rng.gen_range(0..32)] ^= 1 << rng.gen_range(0..8);
    match rng.gen_range(0..7) {
        0 => flip(root, rng),
        1 => {
            let at = rng.gen_range(0..leaf.len());
            leaf[at] ^= 1 << rng.gen_range(0..8);
        }
        2 => leaf.push(rng.gen()),
        3 => {
            let at = rng.gen_range(0..path.siblings.len());
            flip(&mut path.siblings[at].0, rng);
        }
        4 => {
            let at = rng.gen_range(0..path.siblings.len());
            let side = &mut path.siblings[at].1;
            *side = if *side == Side::Left { Side::Right } else { Side::Left };
        }
        5 => {
            *index ^= 1 << rng.gen_range(0..path.siblings.len() + 1);
            path.index = *index;
        }
        _ => {
            if rng.gen_bool(0.5) && path.siblings.len() > 1 {
                path.siblings.pop();
            } else {
                path.siblings.push((Digest(rng.gen()), Side::Right));
            }
        }
    }
}

fn leaves(size: usize, salt: u8) -> Vec<Vec<u8>> {
    (0..size).map(|i| vec![salt, i as u8, (i * 7) as u8, 0x5a]).collect()
}

fn merkle_suite() -> Outcome {
    let pp = setup_com(128).map_err(|e| e.to_string())?;
    let mut openings = 0;
    for size in 1..=64 {
        let ls = leaves(size, 1);
        let (root, tree) = mt_commit(&pp, &ls).map_err(|e| e.to_string())?;
        for (i, leaf) in ls.iter().enumerate() {
            let path = mt_open(&pp, &tree, i).map_err(|e| e.to_string())?;
            ensure(mt_verify(&pp, &root, i, leaf, &path), || {
                format!("leaf {i} of {size} does not verify")
            })?;
            openings += 1;
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(0xc7);
    let trees: Vec<_> = (1..=64)
        .map(|size| (leaves(size, 2), mt_commit(&pp, &leaves(size, 2)).unwrap()))
        .collect();
    let mutations = 100_000;
    for _ in 0..mutations {
        let (ls, (root, tree)) = &trees[rng.gen_range(0..trees.len())];
        let mut index = rng.gen_range(0..ls.len());
        let mut path = mt_open(&pp, tree, index).unwrap();
        let mut leaf = ls[index].clone();
        let mut root = *root;
        let original = (root, index, leaf.clone(), path.clone());
        tamper(&mut rng, &mut root, &mut index, &mut leaf, &mut path);
        if (root, index, leaf.clone(), path.clone()) == original {
            continue;
        }
        ensure(!mt_verify(&pp, &root, index, &leaf, &path), || {
            format!("false accept at index {index}")
        })?;
    }
    let (c1, r1) = commit(&pp, b"same message", &mut rng);
    let (c2, r2) = commit(&pp, b"same message", &mut rng);
    ensure(
        c1 != c2 && open(&pp, &c1, b"same message", &r1) && open(&pp, &c2, b"same message", &r2),
        || "repeated commitments coincide".into(),
    )?;
    let mut differing = 0u32;
    let samples = 2000;
    for _ in 0..samples {
        let (a, _) = commit(&pp, &[0u8], &mut rng);
        let (b, _) = commit(&pp, &[1u8], &mut rng);
        differing +=
            a.0 .0
                .iter()
                .zip(b.0 .0.iter())
                .map(|(x, y)| (x ^ y).count_ones())
                .sum::<u32>();
    }
    let share = differing as f64 / (samples as f64 * 256.0);
    ensure((share - 0.5).abs() < 0.01, || {
        format!("commitments to 0 and 1 differ in {share:.4} of bits")
    })?;
    Ok(format!(
        "{openings} openings verify; {mutations} tampered openings rejected; 0/1 commitments differ in {share:.4} of bits"
    ))
}

fn split_equivalence() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0xc8);
    let mut counts = Vec::new();
    for name in ["lenetxs", "lenet5", "cnn5"] {
        let arch = Architecture::builtin(name).map_err(|e| e.to_string())?;
        let model = arch.random_model(rng.gen()).map_err(|e| e.to_string())?;
        let split = split_model(&model, arch.split.b_end, &rng.gen::<[u8; 8]>()).map_err(|e| e.to_string())?;
        let len: usize = arch.input_shape.iter().product();
        let inputs: Vec<FixedTensor> = (0..100)
            .map(|_| {
                let v: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
                FixedTensor::from_f64(arch.input_shape.clone(), &v).unwrap()
            })
            .collect();
        let bad = inputs
            .par_iter()
            .filter(|x| model.forward(x).ok() != split.forward(x).ok() || model.forward(x).is_err())
            .count();
        ensure(bad == 0, || format!("{name}: {bad} of 100 inputs differ"))?;
        counts.push((name, arch.parameter_count()));
    }
    ensure(counts[0].1 == 3_968 && counts[1].1 == 61_706, || {
        format!("parameter counts {counts:?}")
    })?;
    Ok(format!("300 inputs bit-exact; parameters {counts:?}"))
}

fn jl_distortion() -> Outcome {
    let (d, m, pairs) = (784, 64, 1000);
    let mut rng = ChaCha20Rng::seed_from_u64(0xc9);
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let r = ProjectionMatrix::from_seed(Digest(seed), m, d);
    let point = |rng: &mut ChaCha20Rng| {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        FixedTensor::from_f64(vec![d], &v).unwrap()
    };
    let mut within = 0;
    for _ in 0..pairs {
        let (a, b) = (point(&mut rng), point(&mut rng));
        let before = squared_distance(a.data(), b.data()) as f64;
        let (pa, pb) = (jl_project(&r, &a).unwrap(), jl_project(&r, &b).unwrap());
        let after = squared_distance(pa.data(), pb.data()) as f64;
        within += (0.5..=1.5).contains(&(after / before)) as usize;
    }
    let share = within as f64 / pairs as f64;
    ensure(share >= 0.95, || format!("only {share:.3} of ratios within [0.5, 1.5]"))?;
    Ok(format!("{within}/{pairs} squared-distance ratios within [0.5, 1.5]"))
}

fn ledger() -> Outcome {
    let sequences = 10_000u64;
    let len = 50;
    let accepted: usize = (0..sequences)
        .into_par_iter()
        .map(|seed| -> Result<usize, String> {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut state = common::genesis();
            let total = state.total_value();
            let mut accepted = 0;
            for _ in 0..len {
                let next = match common::random_step(&mut rng, &state) {
                    Step::Tx(tx) => state.apply(&tx).map(|_| true).unwrap_or(false),
                    Step::Advance(b) => {
                        state.advance(b);
                        true
                    }
                    Step::FairnessHook(lock) => fairness_hook(&mut state, lock).is_ok(),
                };
                accepted += next as usize;
                ensure(state.total_value() == total, || {
                    format!("sequence {seed} changed the total value")
                })?;
            }
            Ok(accepted)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();

    let honest = run_script(&demo_script(DemoScenario::Honest)).map_err(|e| e.to_string())?;
    let s = &honest.state;
    ensure(
        s.hashlocks[&8].status == LockStatus::Settled && s.escrows.values().all(|e| e.status == EscrowStatus::Released),
        || "honest script did not settle".into(),
    )?;
    let withheld = run_script(&demo_script(DemoScenario::WithheldKey)).map_err(|e| e.to_string())?;
    ensure(withheld.state.hashlocks[&8].status == LockStatus::Refunded, || {
        "withheld key was not refunded".into()
    })?;

    let mut script = demo_script(DemoScenario::Honest);
    script.steps.truncate(7);
    script.steps.extend([Step::Advance(10), Step::FairnessHook(7)]);
    let silent = run_script(&script).map_err(|e| e.to_string())?;
    let slashed = matches!(
        silent.log.last().and_then(|e| e.fairness.clone()),
        Some(FairnessOutcome::Slashed { .. })
    );
    ensure(slashed, || "fairness hook did not slash a silent poster".into())?;
    Ok(format!(
        "{sequences} sequences ({accepted} accepted steps) conserve value; honest settles, withheld refunds, silence slashed"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("detection bound", 30, detection_bound),
        ("audit budget", 30, audit_budget),
        ("protocol equals oracle", 300, protocol_equals_oracle),
        ("adversary catalogue", 600, adversaries),
        ("CP sample size", 600, cp_sample_size_law),
        ("commitments and Merkle trees", 600, merkle_suite),
        ("split equivalence", 600, split_equivalence),
        ("JL distortion", 600, jl_distortion),
        ("ledger conservation", 600, ledger),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let number = i + 1;
        if !only.is_empty() && !only.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > Duration::from_secs(limit) => Err(format!("{detail}; over the {limit} s limit")),
            other => other,
        };
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += result.is_err() as usize;
        println!(
            "criterion {number} {status} [{:.1} s] {name}: {detail}",
            took.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
