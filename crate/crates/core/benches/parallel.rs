//! Single-thread versus full rayon pool on the data-parallel kernels.
//!
//! Build with `--no-default-features` to measure the plain sequential path;
//! both pool sizes then run the same code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;

use tna::inference::{bootstrap_edges, permutation_compare, BootstrapOptions, PermutationOptions};
use tna::markov::{simulate, tally};
use tna::mixture::{fit_em, EmOptions};
use tna::{Alphabet, Scaling, StateSequence, TransitionModel};

fn model() -> TransitionModel {
    let rows = [
        0.6, 0.2, 0.1, 0.1, //
        0.1, 0.6, 0.2, 0.1, //
        0.1, 0.1, 0.6, 0.2, //
        0.2, 0.1, 0.1, 0.6,
    ];
    TransitionModel::new(
        Alphabet::new(["a", "b", "c", "d"]).unwrap(),
        vec![0.25; 4],
        DMatrix::from_row_slice(4, 4, &rows),
        Scaling::Stochastic,
    )
    .unwrap()
}

fn data(n: usize, len: usize, seed: u64) -> Vec<StateSequence> {
    simulate(&model(), n, len, seed).unwrap()
}

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let full = rayon::current_num_threads();
    let mut sizes = vec![1];
    if full > 1 {
        sizes.push(full);
    }
    sizes
        .into_iter()
        .map(|t| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
            (format!("{t}_threads"), pool)
        })
        .collect()
}

fn bench_kernels(c: &mut Criterion) {
    let alphabet = model().alphabet().clone();
    let big = data(20_000, 50, 1);
    let medium = data(300, 40, 2);
    let half = medium.len() / 2;

    let mut g = c.benchmark_group("tally");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| b.iter(|| pool.install(|| tally(&big, 4).unwrap())));
    }
    g.finish();

    let mut g = c.benchmark_group("bootstrap");
    g.sample_size(10);
    let opts = BootstrapOptions {
        replicates: 200,
        seed: 3,
        ..Default::default()
    };
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| bootstrap_edges(&medium, &alphabet, &opts).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("permutation");
    g.sample_size(10);
    let opts = PermutationOptions { permutations: 200, seed: 4 };
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| permutation_compare(&medium[..half], &medium[half..], &alphabet, &opts).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("em_restarts");
    g.sample_size(10);
    let opts = EmOptions {
        restarts: 16,
        seed: 5,
        ..Default::default()
    };
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| fit_em(&medium, &alphabet, None, 2, &opts).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_kernels);
criterion_main!(benches);
