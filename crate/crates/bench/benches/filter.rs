//! Filter benchmarks: the scalar recursion's cost stays flat as the chain
//! dimension grows, while the dense augmented filter scales quadratically.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qcd_bench::model_of_dimension;
use qcd_core::{
    hmm_filter_step, run_filter, scalar_filter_step, seed, AugmentedPosterior, ChainState,
    ChangeSpec, FilterMode, PosteriorState,
};

fn bench_step_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("filter_step");
    for n in [2usize, 8, 32, 128] {
        let model = model_of_dimension(n);
        let augmented = model.augmented();
        let start = PosteriorState::initial(ChainState::new(0));
        let scalar_state = scalar_filter_step(&model, &start, ChainState::new(1)).unwrap();
        let dense_start = AugmentedPosterior::initial(n, ChainState::new(0));
        let dense_state = hmm_filter_step(&augmented, &dense_start, ChainState::new(1)).unwrap();

        group.bench_with_input(BenchmarkId::new("scalar", n), &n, |b, _| {
            b.iter(|| {
                scalar_filter_step(&model, black_box(&scalar_state), ChainState::new(0)).unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("dense", n), &n, |b, _| {
            b.iter(|| {
                hmm_filter_step(&augmented, black_box(&dense_state), ChainState::new(1)).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_full_trace(c: &mut Criterion) {
    let model = model_of_dimension(3);
    let mut rng = seed::derive(0xBE7C, "bench-trace", &[]);
    let trajectory = model.simulate(5000, ChangeSpec::Sample, &mut rng).unwrap();
    c.bench_function("run_filter_scalar_5000", |b| {
        b.iter(|| run_filter(&model, black_box(&trajectory), FilterMode::Scalar).unwrap())
    });
}

criterion_group!(benches, bench_step_scaling, bench_full_trace);
criterion_main!(benches);
