use privade_core::audit::{cp_challenge, cp_prove, detection_probability_exact, AuditPlan};
use privade_core::commitments::{commit, mt_commit, mt_open, mt_verify, open, CommitParams, Digest};
use privade_core::fixtures::{build_fixture, FixtureSpec};
use privade_core::model_split::{full_trace, split_model, Architecture};
use privade_core::scoring::{score_multi_oracle, ScoreWeights};
use privade_core::selection::{jl_project, k_center_greedy, ProjectionMatrix, RepresentativeSet};
use privade_core::{FixedScalar, FixedTensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn fixed(raw: i32) -> FixedScalar {
    FixedScalar::from_raw(raw)
}

fn narrow(wide: i64) -> Option<i32> {
    i32::try_from(wide).ok()
}

fn points(raws: &[Vec<i32>]) -> Vec<FixedTensor> {
    raws.iter()
        .map(|r| FixedTensor::from_raw(vec![r.len()], r.clone()).unwrap())
        .collect()
}

proptest! {
    #[test]
    fn fixed_arithmetic_matches_wide_integers(a in any::<i32>(), b in any::<i32>()) {
        let (x, y) = (fixed(a), fixed(b));
        prop_assert_eq!(x.checked_add(y).ok().map(FixedScalar::raw), narrow(a as i64 + b as i64));
        prop_assert_eq!(x.checked_sub(y).ok().map(FixedScalar::raw), narrow(a as i64 - b as i64));
        let product = (a as i64 * b as i64).div_euclid(1 << 16);
        prop_assert_eq!(x.checked_mul(y).ok().map(FixedScalar::raw), narrow(product));
    }

    #[test]
    fn tensors_require_matching_length(dims in prop::collection::vec(1usize..5, 1..4), extra in -2i64..3) {
        let len = dims.iter().product::<usize>() as i64 + extra;
        prop_assume!(len >= 0);
        let t = FixedTensor::new(dims.clone(), vec![FixedScalar::ONE; len as usize]);
        prop_assert_eq!(t.is_ok(), extra == 0);
        if let Ok(t) = t {
            prop_assert_eq!(FixedTensor::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }

    #[test]
    fn merkle_paths_verify_with_log_length(leaves in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..16), 1..64)) {
        let pp = CommitParams::default();
        let (root, tree) = mt_commit(&pp, &leaves).unwrap();
        let depth = (leaves.len().next_power_of_two().trailing_zeros() as usize).max(1);
        for (i, leaf) in leaves.iter().enumerate() {
            let path = mt_open(&pp, &tree, i).unwrap();
            prop_assert_eq!(path.siblings.len(), depth);
            prop_assert!(mt_verify(&pp, &root, i, leaf, &path));
        }
    }

    #[test]
    fn commitments_open_only_to_their_message(m in prop::collection::vec(any::<u8>(), 0..64), other in prop::collection::vec(any::<u8>(), 0..64), seed in any::<u64>()) {
        let pp = CommitParams::default();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (c, r) = commit(&pp, &m, &mut rng);
        prop_assert!(open(&pp, &c, &m, &r));
        prop_assert_eq!(open(&pp, &c, &other, &r), m == other);
    }

    #[test]
    fn projection_is_linear_and_seeded(seed in any::<[u8; 32]>(), rows in 1usize..8, x in prop::collection::vec(-1_000_000i32..1_000_000, 12), y in prop::collection::vec(-1_000_000i32..1_000_000, 12)) {
        let r = ProjectionMatrix::from_seed(Digest(seed), rows, 12);
        prop_assert_eq!(&r, &ProjectionMatrix::from_seed(Digest(seed), rows, 12));
        for i in 0..rows {
            for j in 0..12 {
                prop_assert_eq!(r.entry(i, j).raw().abs(), r.scale.raw());
            }
        }
        let diff: Vec<i32> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let (px, py, pd) = (
            r.project_unscaled(points(&[x])[0].data()),
            r.project_unscaled(points(&[y])[0].data()),
            r.project_unscaled(points(&[diff])[0].data()),
        );
        for i in 0..rows {
            prop_assert_eq!(px[i] - py[i], pd[i]);
        }
    }

    #[test]
    fn k_center_greedy_picks_distinct_indices(raws in prop::collection::vec(prop::collection::vec(-100_000i32..100_000, 3), 1..40), k in 1usize..40) {
        let xs = points(&raws);
        match k_center_greedy(&xs, k) {
            Ok(rep) => {
                prop_assert!(k <= xs.len());
                prop_assert_eq!(rep.k(), k);
                let mut idx = rep.indices.clone();
                idx.sort_unstable();
                idx.dedup();
                prop_assert_eq!(idx.len(), k);
                prop_assert!(idx.iter().all(|&i| i < xs.len()));
            }
            Err(_) => prop_assert!(k > xs.len()),
        }
    }

    #[test]
    fn cp_challenges_are_distinct_and_all_answered(n in 1usize..200, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let num = ((n as f64 * frac) as usize).max(1);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let xs: Vec<FixedTensor> = (0..n).map(|i| FixedTensor::from_raw(vec![1], vec![i as i32]).unwrap()).collect();
        let challenge = cp_challenge(&mut rng, n, num).unwrap();
        let mut sorted = challenge.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), num);
        prop_assert!(sorted.iter().all(|&i| i < n));
        let rep = RepresentativeSet::new(vec![0], n).unwrap();
        let rs = vec![Default::default(); n];
        let responses = cp_prove(&xs, &rs, &rep, FixedScalar::from_int(1), &challenge);
        prop_assert_eq!(responses.iter().map(|r| r.index()).collect::<Vec<_>>(), challenge);
        prop_assert!(cp_challenge(&mut rng, n, n + 1).is_err());
    }

    #[test]
    fn detection_is_monotone(n in 1usize..60, l in 1usize..8, m in 1usize..60, s in 1usize..8, rho in 0.0f64..=1.0, bump in 0.0f64..0.3) {
        prop_assume!(m <= n && s <= l);
        let p = |m, s, rho| detection_probability_exact(&AuditPlan { n, l, m, s, rho }).unwrap();
        let base = p(m, s, rho);
        if m < n {
            prop_assert!(p(m + 1, s, rho) >= base);
        }
        if s < l {
            prop_assert!(p(m, s + 1, rho) >= base);
        }
        prop_assert!(p(m, s, (rho + bump).min(1.0)) >= base);
        let oversized = AuditPlan { n, l, m: n + 1, s, rho };
        prop_assert!(oversized.validate().is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn split_forward_equals_unsplit(arch in 0usize..2, seed in any::<u64>(), input_seed in any::<u64>()) {
        let arch = Architecture::builtin(["lenetxs", "lenet5"][arch]).unwrap();
        let model = arch.random_model(seed).unwrap();
        let split = split_model(&model, arch.split.b_end, &seed.to_be_bytes()).unwrap();
        let len: usize = arch.input_shape.iter().product();
        let mut rng = ChaCha20Rng::seed_from_u64(input_seed);
        let x = FixedTensor::from_raw(arch.input_shape.clone(), (0..len).map(|_| rand::Rng::gen_range(&mut rng, 0..1 << 16)).collect()).unwrap();
        prop_assert_eq!(split.forward(&x).unwrap(), model.forward(&x).unwrap());
        let mut inverse = split.mixer.clone();
        inverse.sort_unstable();
        prop_assert_eq!(inverse, (0..split.mixer.len()).collect::<Vec<_>>());
    }

    #[test]
    fn traces_have_one_level_per_layer(seed in any::<u64>(), n in 1usize..4) {
        let arch = Architecture::builtin("lenetxs").unwrap();
        let model = arch.random_model(seed).unwrap();
        let len: usize = arch.input_shape.iter().product();
        let xs: Vec<FixedTensor> = (0..n)
            .map(|i| FixedTensor::from_raw(arch.input_shape.clone(), vec![(i as i32 + 1) << 12; len]).unwrap())
            .collect();
        let trace = full_trace(&model, &xs).unwrap();
        let shapes = model.shapes().unwrap();
        prop_assert_eq!(trace.levels.len(), model.layers.len() + 1);
        for (level, shape) in trace.levels.iter().zip(&shapes) {
            prop_assert_eq!(level.len(), n);
            prop_assert!(level.iter().all(|a| a.shape() == shape.as_slice()));
        }
    }

    #[test]
    fn phi_is_the_weighted_sum(seed in 1u64..1000, a1 in -2.0f64..2.0, a2 in -2.0f64..2.0, a3 in -2.0f64..2.0) {
        let fx = build_fixture(&FixtureSpec { arch: "toy".into(), n: 60, k: 8, seed, projection_dim: None }).unwrap();
        let mut scoring = fx.config.scoring;
        scoring.weights = ScoreWeights::from_f64(a1, a2, a3);
        let r = score_multi_oracle(&fx.split, &fx.dataset, fx.config.k, &scoring).unwrap();
        let w = &scoring.weights;
        let term = |a: FixedScalar, x: FixedScalar| (a.raw() as i64 * x.raw() as i64).div_euclid(1 << 16);
        let expected = term(w.alpha1, r.l) + term(w.alpha2, r.u) + term(w.alpha3, r.d);
        prop_assert_eq!(r.phi.raw() as i64, expected);
    }
}

#[test]
fn jl_projection_matches_signed_sums() {
    let r = ProjectionMatrix::from_seed(Digest([3; 32]), 4, 6);
    let x = FixedTensor::from_f64(vec![6], &[0.5, -1.0, 2.0, 0.25, 0.0, 3.0]).unwrap();
    let y = jl_project(&r, &x).unwrap();
    for (i, v) in y.data().iter().enumerate() {
        let sum: f64 = (0..6)
            .map(|j| r.entry(i, j).to_f64().signum() * x.data()[j].to_f64())
            .sum();
        assert!((v.to_f64() - sum * r.scale.to_f64()).abs() < 1e-4);
    }
}
