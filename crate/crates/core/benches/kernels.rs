//! Hot-kernel benchmarks: reverse-reachable sampling, cascade trials and
//! greedy selection, comparing the sequential path against rayon pools of
//! different sizes.
//!
//! With the default `parallel` feature each kernel runs under pools of 1, 2
//! and all cores; a `--no-default-features` build benches the plain
//! sequential fallback under the `seq` label. Outputs are identical in every
//! configuration, only the wall time changes.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use profitmax::diffusion::mc_expected_spread;
use profitmax::graph::{CopyGraph, ProductCatalog};
use profitmax::harness::gen_synthetic;
use profitmax::ris::generate_collection;
use profitmax::rmg::{modified_greedy, GreedyMode};

fn with_modes<F: Fn() + Sync>(c: &mut Criterion, name: &str, f: F) {
    #[cfg(feature = "parallel")]
    {
        let cores = std::thread::available_parallelism().map_or(4, |n| n.get());
        let mut pools = vec![1usize, 2, cores];
        pools.dedup();
        for workers in pools {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap();
            c.bench_function(&format!("{name}/pool{workers}"), |b| {
                b.iter(|| pool.install(&f))
            });
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        c.bench_function(&format!("{name}/seq"), |b| b.iter(&f));
    }
}

fn bench_rr_generation(c: &mut Criterion) {
    let g = gen_synthetic(2000, 4.0, 11).unwrap();
    let cg = CopyGraph::new(&g, 3);
    with_modes(c, "rr_generation_50k", || {
        black_box(generate_collection(&cg, 50_000, 1).unwrap().theta());
    });
}

fn bench_mc_spread(c: &mut Criterion) {
    let g = gen_synthetic(2000, 4.0, 11).unwrap();
    let seeds = (0..20u32).collect();
    with_modes(c, "mc_spread_20seeds_5k_trials", || {
        black_box(mc_expected_spread(&g, &seeds, 5_000, 1));
    });
}

fn bench_selection(c: &mut Criterion) {
    let g = gen_synthetic(1000, 4.0, 11).unwrap();
    let cg = CopyGraph::new(&g, 3);
    let cat = ProductCatalog::new(vec![0.45, 0.20, 0.06], vec![0.08, 0.65, 0.78]).unwrap();
    let rc = generate_collection(&cg, 200_000, 5).unwrap();
    with_modes(c, "fast_greedy_200k_sets", || {
        black_box(modified_greedy(&rc, &cat, 4.0, GreedyMode::Fast, false).rho_hat);
    });
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = bench_rr_generation, bench_mc_spread, bench_selection
}
criterion_main!(kernels);
