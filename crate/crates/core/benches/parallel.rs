//! Parallel vs sequential throughput on the hot batch paths: cover
//! generation, ODE inversion, and detector training.
//!
//! `map_indexed` dispatches to rayon under the default `parallel` feature;
//! `map_indexed_seq` is the always-available sequential path the feature
//! flag falls back to.  Run with `--no-default-features` to confirm the
//! sequential build benches identically to `map_indexed_seq`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use noiselab_core::ensemble::{self, FldHyper};
use noiselab_core::par;
use noiselab_core::prior::{GmmComponent, GmmPrior, GuidanceConfig};
use noiselab_core::schedule::{NoiseSchedule, ScheduleKind};
use noiselab_core::seeds;
use noiselab_core::solvers::{integrate, Direction, SolverConfig, SolverKind};
use noiselab_core::stego::{gen_cover, Backbone, Quantizer};

fn bench_backbone() -> Backbone {
    let dim = 64;
    let mut mean_a = vec![0.0; dim];
    let mut mean_b = vec![0.0; dim];
    for j in 0..8 {
        mean_a[j] = 0.2;
        mean_b[j] = -0.2;
    }
    let prior = GmmPrior::new(
        dim,
        vec![
            GmmComponent { weight: 0.5, mean: mean_a, var: vec![1.0; dim], label: Some(0) },
            GmmComponent { weight: 0.5, mean: mean_b, var: vec![0.9; dim], label: Some(1) },
        ],
    )
    .unwrap();
    Backbone::new("bench", 2, prior, NoiseSchedule::build(ScheduleKind::LinearBeta, 1000).unwrap()).unwrap()
}

fn bench_generate(c: &mut Criterion) {
    let backbone = bench_backbone();
    let solver = SolverConfig { kind: SolverKind::Heun2, steps: 20 };
    let quant = Quantizer::off();
    let job = move |i: usize| {
        let mut rng = seeds::rng(seeds::derive(1, &[i as u64]));
        gen_cover(&backbone, &solver, &GuidanceConfig::OFF, &quant, &mut rng).unwrap()
    };
    let mut g = c.benchmark_group("generate-batch");
    for &n in &[16usize, 64] {
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| par::map_indexed(n, &job))
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| par::map_indexed_seq(n, &job))
        });
    }
    g.finish();
}

fn bench_invert(c: &mut Criterion) {
    let backbone = bench_backbone();
    let solver = SolverConfig { kind: SolverKind::Heun2, steps: 20 };
    let quant = Quantizer::off();
    let samples: Vec<Vec<f64>> = (0..64)
        .map(|i| {
            let mut rng = seeds::rng(seeds::derive(2, &[i as u64]));
            gen_cover(&backbone, &solver, &GuidanceConfig::OFF, &quant, &mut rng).unwrap()
        })
        .collect();
    let job = move |i: usize| {
        integrate(
            &samples[i],
            &solver,
            Direction::Invert,
            &backbone.prior,
            &backbone.schedule,
            &GuidanceConfig::OFF,
        )
        .unwrap()
    };
    let mut g = c.benchmark_group("invert-batch");
    for &n in &[16usize, 64] {
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| par::map_indexed(n, &job))
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| par::map_indexed_seq(n, &job))
        });
    }
    g.finish();
}

fn bench_train(c: &mut Criterion) {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = seeds::rng(3);
    let blob = |rng: &mut rand_chacha::ChaCha12Rng, shift: f64| -> Vec<Vec<f64>> {
        (0..256)
            .map(|_| (0..10).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect())
            .collect()
    };
    let cover = blob(&mut rng, 0.0);
    let stego = blob(&mut rng, 0.4);
    // committee training parallelizes across learners internally
    c.bench_function("train-committee", |b| {
        b.iter(|| ensemble::train(&cover, &stego, &FldHyper::default(), 7).unwrap())
    });
}

criterion_group!(benches, bench_generate, bench_invert, bench_train);
criterion_main!(benches);
