use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ompd_bench::{
    gauss_markov, optimum_tolerance, random_matrix, random_vector, separation, solved_trace,
};
use ompd_core::losses::Domain;
use ompd_core::prox::{self, NalgebraSvd, SubproblemSpec};
use ompd_core::{regret, DistanceGenerator, ErrorModel};

fn thresholding(c: &mut Criterion) {
    let mut g = c.benchmark_group("soft_threshold");
    for n in [30, 1_000, 100_000] {
        let y = random_vector(n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &y, |b, y| {
            b.iter(|| prox::soft_threshold(black_box(y), 0.3))
        });
    }
    g.finish();

    let svd = NalgebraSvd::default();
    let mut g = c.benchmark_group("singular_value_threshold");
    for (rows, cols) in [(6, 6), (16, 64), (64, 256)] {
        let z = random_matrix(rows, cols, 2);
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{rows}x{cols}")),
            &z,
            |b, z| b.iter(|| prox::singular_value_threshold(black_box(z), 1.0, &svd).unwrap()),
        );
    }
    g.finish();
}

fn mirror_step(c: &mut Criterion) {
    let data = gauss_markov(1);
    let step = &data.stream.steps()[0];
    let anchor = random_vector(30, 3).map(|v| 0.5 + 0.1 * v.abs());
    let grad = step.smooth_gradient(&anchor);
    let mut g = c.benchmark_group("exact_mirror_prox");
    let cases = [
        (
            "euclidean_whole",
            DistanceGenerator::euclidean(),
            Domain::WholeSpace,
        ),
        (
            "euclidean_box",
            DistanceGenerator::euclidean(),
            Domain::cube_with_diameter(30, 20.0),
        ),
        (
            "entropy_whole",
            DistanceGenerator::neg_entropy(),
            Domain::WholeSpace,
        ),
        (
            "entropy_ball",
            DistanceGenerator::neg_entropy(),
            Domain::ball_with_diameter(30, 2.0),
        ),
    ];
    for (name, gen, domain) in &cases {
        let spec = SubproblemSpec::new(step, gen, &anchor, &grad, 0.001, domain, false).unwrap();
        g.bench_function(*name, |b| {
            b.iter(|| prox::exact_mirror_prox(black_box(&spec)).unwrap())
        });
    }
    g.finish();

    let model = ErrorModel::gaussian(1, 0.05, 0.2);
    let gen = DistanceGenerator::euclidean();
    let spec =
        SubproblemSpec::new(step, &gen, &anchor, &grad, 0.01, &Domain::WholeSpace, true).unwrap();
    c.bench_function("inexact_mirror_prox", |b| {
        b.iter(|| prox::inexact_mirror_prox(black_box(&spec), &model, 17).unwrap())
    });

    let (sep, _) = separation(1);
    let sstep = &sep.stream.steps()[0];
    let x0 = sstep.smooth_gradient(&random_vector(sstep.dim(), 4)) * 0.0;
    let sgrad = sstep.smooth_gradient(&x0);
    let sspec =
        SubproblemSpec::new(sstep, &gen, &x0, &sgrad, 0.1, &Domain::WholeSpace, true).unwrap();
    c.bench_function("separation_mirror_step", |b| {
        b.iter(|| prox::exact_mirror_prox(black_box(&sspec)).unwrap())
    });
}

fn optimum(c: &mut Criterion) {
    let data = gauss_markov(1);
    let step = &data.stream.steps()[0];
    c.bench_function("offline_optimum_lasso30", |b| {
        b.iter(|| {
            regret::offline_optimum(black_box(step), &Domain::WholeSpace, optimum_tolerance())
                .unwrap()
        })
    });
}

fn ledger(c: &mut Criterion) {
    let (trace, cfg) = solved_trace(1_000);
    let domain = Domain::WholeSpace;
    c.bench_function("ledger_and_rhs_T1000", |b| {
        b.iter(|| {
            let l = regret::ledger_from_trace(
                black_box(&trace),
                &cfg.generator,
                cfg.step_size,
                &domain,
            )
            .unwrap();
            regret::theorem_rhs(&l, l.regime).unwrap()
        })
    });
}

criterion_group!(benches, thresholding, mirror_step, optimum, ledger);
criterion_main!(benches);
