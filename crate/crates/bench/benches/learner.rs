use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cmdpac_bench::{grid, grid_learner};
use cmdpac_core::linalg::SparseVec;
use cmdpac_core::{oracle, Algorithm, FisherState, PolicyClass, SoftmaxPolicy};

fn steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for side in [5, 25] {
        for alg in [Algorithm::Cac, Algorithm::Cnac] {
            // the dense Fisher of the larger grid is 1875 wide; keep it to the small one
            if side == 25 && alg == Algorithm::Cnac {
                continue;
            }
            let (learner, st) = grid_learner(side, alg, 2_000);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            group.bench_function(BenchmarkId::new(alg.name(), format!("{side}x{side}")), |b| {
                b.iter_batched_ref(|| st.clone(), |s| learner.step(s, &mut rng).unwrap(), BatchSize::SmallInput)
            });
        }
    }
    group.finish();
}

fn stationary(c: &mut Criterion) {
    let mut group = c.benchmark_group("stationary_distribution");
    group.sample_size(10);
    for side in [5, 25] {
        let model = grid(side);
        let policy = SoftmaxPolicy::zeros(std::sync::Arc::new(PolicyClass::tabular(&model)));
        group.bench_function(format!("{side}x{side}"), |b| {
            b.iter(|| oracle::stationary_distribution(&model, &policy).unwrap())
        });
    }
    group.finish();
}

fn fisher(c: &mut Criterion) {
    let mut group = c.benchmark_group("fisher_update");
    for dim in [75, 300] {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // tabular scores touch the actions of a single state; the periodic
        // refresh is part of the amortized cost
        // every state block is hit four times per cycle so G stays well conditioned
        let scores: Vec<SparseVec> = (0..4 * dim / 3)
            .map(|k| {
                let base = 3 * (k % (dim / 3));
                SparseVec::from_pairs((0..3).map(|i| (base + i, rng.random_range(-1.0..1.0))).collect())
            })
            .collect();
        let mut f = FisherState::new(dim, 1.0, 1000).unwrap();
        let mut i = 0usize;
        group.bench_function(BenchmarkId::from_parameter(dim), |b| {
            b.iter(|| {
                f.update(0.01, &scores[i % scores.len()], i as u64).unwrap();
                i += 1;
            })
        });
        group.bench_function(BenchmarkId::new("refresh", dim), |b| b.iter(|| f.refresh(0).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, steps, stationary, fisher);
criterion_main!(benches);
