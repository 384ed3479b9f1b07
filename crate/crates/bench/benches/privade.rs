use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use privade_core::audit::{detection_probability_exact, plan_audit, AuditPlan};
use privade_core::commitments::{mt_commit, setup_com, Digest};
use privade_core::fixtures::{build_fixture, FixtureSpec};
use privade_core::market::{demo_script, run_script, DemoScenario};
use privade_core::protocol::{run_privade, transcript_replay, ReplayPublic, Transport};
use privade_core::selection::{jl_project, k_center_greedy, ProjectionMatrix};
use privade_core::FixedTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(arch: &str, n: usize, k: usize) -> privade_core::fixtures::Fixture {
    build_fixture(&FixtureSpec {
        arch: arch.into(),
        n,
        k,
        seed: 1,
        projection_dim: None,
    })
    .unwrap()
}

fn numerics(c: &mut Criterion) {
    let fx = fixture("lenetxs", 10, 5);
    let x = fx.dataset.xs[0].clone();
    c.bench_function("lenetxs forward", |b| {
        b.iter(|| fx.model.forward(black_box(&x)).unwrap())
    });
    let fx = fixture("lenet5", 10, 5);
    let x = fx.dataset.xs[0].clone();
    c.bench_function("lenet5 forward", |b| {
        b.iter(|| fx.model.forward(black_box(&x)).unwrap())
    });
}

fn commitments(c: &mut Criterion) {
    let pp = setup_com(128).unwrap();
    let leaves: Vec<Vec<u8>> = (0..1024u32).map(|i| i.to_le_bytes().repeat(16)).collect();
    c.bench_function("merkle commit 1024 leaves", |b| {
        b.iter(|| mt_commit(&pp, black_box(&leaves)).unwrap())
    });
}

fn selection(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<FixedTensor> = (0..1000)
        .map(|_| {
            let v: Vec<f64> = (0..16).map(|_| rng.gen_range(-4.0..4.0)).collect();
            FixedTensor::from_f64(vec![16], &v).unwrap()
        })
        .collect();
    c.bench_function("k-center greedy n=1000 k=50", |b| {
        b.iter(|| k_center_greedy(black_box(&points), 50).unwrap())
    });
    let matrix = ProjectionMatrix::from_seed(Digest([7; 32]), 4, 16);
    c.bench_function("jl project 1000 points", |b| {
        b.iter(|| {
            points
                .iter()
                .map(|p| jl_project(&matrix, black_box(p)).unwrap())
                .collect::<Vec<_>>()
        })
    });
}

fn audit(c: &mut Criterion) {
    let plan = AuditPlan {
        n: 100,
        l: 10,
        m: 25,
        s: 6,
        rho: 0.1,
    };
    c.bench_function("detection probability exact", |b| {
        b.iter(|| detection_probability_exact(black_box(&plan)).unwrap())
    });
    c.bench_function("plan audit 100x10", |b| {
        b.iter(|| plan_audit(100, 10, 0.1, 0.8).unwrap())
    });
}

fn protocol(c: &mut Criterion) {
    let mut group = c.benchmark_group("protocol");
    group.sample_size(10);
    for (arch, n, k) in [("toy", 200, 20), ("lenetxs", 100, 10)] {
        let fx = fixture(arch, n, k);
        group.bench_function(format!("run {arch} n={n} k={k}"), |b| {
            b.iter_batched(
                || (fx.alice.clone(), fx.bob.clone()),
                |(a, bob)| run_privade(a, bob, &fx.config, &Transport::InProc).unwrap(),
                BatchSize::SmallInput,
            )
        });
        let out = run_privade(fx.alice.clone(), fx.bob.clone(), &fx.config, &Transport::InProc).unwrap();
        let public = ReplayPublic {
            config: fx.config.clone(),
        };
        group.bench_function(format!("replay {arch} n={n} k={k}"), |b| {
            b.iter(|| transcript_replay(black_box(&out.transcript), &public).unwrap())
        });
    }
    group.finish();
}

fn market(c: &mut Criterion) {
    let script = demo_script(DemoScenario::Honest);
    c.bench_function("market honest script", |b| {
        b.iter(|| run_script(black_box(&script)).unwrap())
    });
}

criterion_group!(benches, numerics, commitments, selection, audit, protocol, market);
criterion_main!(benches);
