use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lgp::experiments::{evaluate_predictor, BenchmarkPlan};
use lgp::model::{assemble, ThetaPair};
use lgp::par;
use lgp::rollout::TrueSystem;
use lgp::systems::{sample_triplets, system_by_name, SamplingBounds};
use lgp::{KernelPair, OperatorMode};

const PATHS: [(&str, bool); 2] = [("parallel", true), ("sequential", false)];

fn gram(c: &mut Criterion) {
    let s = system_by_name("pendulum2").unwrap();
    let mut g = c.benchmark_group("gram_assembly");
    g.sample_size(10);
    for n in [50, 150] {
        let d = sample_triplets(s.as_ref(), n, &SamplingBounds::default_for(2), 0.05, 1).unwrap();
        let k = KernelPair::physics(2);
        let mode = OperatorMode::ContinuousMidpoint;
        let norm = k.default_normalization(mode, &d);
        let theta = ThetaPair::unit(&k);
        for (name, on) in PATHS {
            par::set_parallel(on);
            g.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| assemble(black_box(&d), &k, &theta, &norm, 1e-3, mode).unwrap())
            });
        }
    }
    g.finish();
    par::set_parallel(true);
}

fn scenarios(c: &mut Criterion) {
    let s = system_by_name("pendulum3").unwrap();
    let plan = BenchmarkPlan { n_q: vec![3], scenarios: 64, horizon: 100, ..Default::default() };
    let truth = TrueSystem(s.as_ref());
    let mut g = c.benchmark_group("scenario_rollouts");
    g.sample_size(10);
    for (name, on) in PATHS {
        par::set_parallel(on);
        g.bench_function(name, |b| b.iter(|| evaluate_predictor(black_box(&plan), s.as_ref(), &truth, 0.05).unwrap()));
    }
    g.finish();
    par::set_parallel(true);
}

fn sampling(c: &mut Criterion) {
    let s = system_by_name("pendulum3").unwrap();
    let bounds = SamplingBounds::default_for(3);
    let mut g = c.benchmark_group("triplet_sampling");
    g.sample_size(10);
    for (name, on) in PATHS {
        par::set_parallel(on);
        g.bench_function(name, |b| b.iter(|| sample_triplets(s.as_ref(), black_box(1000), &bounds, 0.05, 3).unwrap()));
    }
    g.finish();
    par::set_parallel(true);
}

criterion_group!(benches, gram, scenarios, sampling);
criterion_main!(benches);
