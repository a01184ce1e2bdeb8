use std::sync::Arc;

use nalgebra::{dvector, DMatrix, DVector};
use proptest::prelude::*;

use ompd_core::bregman::DistanceGenerator;
use ompd_core::experiments::{self, GaussMarkovConfig, SeparationConfig, Variant};
use ompd_core::losses::{CompositeLossStep, Domain, ErrorModel, Linear, ProblemStream};
use ompd_core::prox::{self, exact_mirror_prox, NalgebraSvd, ProxRule, SubproblemSpec};
use ompd_core::regret::{self, Regime};
use ompd_core::rng;
use ompd_core::solver::{self, SolverConfig};

fn vec_strategy(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-5.0..5.0f64, n).prop_map(DVector::from_vec)
}

fn domains(n: usize) -> Vec<Domain> {
    vec![
        Domain::cube_with_diameter(n, 3.0),
        Domain::Box {
            lower: DVector::from_fn(n, |i, _| -0.5 - i as f64 * 0.1),
            upper: DVector::from_fn(n, |i, _| 1.0 + i as f64 * 0.2),
        },
        Domain::ball_with_diameter(n, 2.5),
        Domain::Ball {
            center: DVector::from_element(n, 0.7),
            radius: 1.1,
        },
        Domain::Simplex { dim: n },
    ]
}

proptest! {
    #[test]
    fn projection_is_nonexpansive_and_idempotent((x, y) in (vec_strategy(6), vec_strategy(6))) {
        for d in domains(6) {
            let (px, py) = (d.project(&x), d.project(&y));
            prop_assert!((&px - &py).norm() <= (&x - &y).norm() + 1e-12, "{d:?}");
            prop_assert!(d.contains(&px, 1e-12));
            prop_assert!((d.project(&px) - &px).norm() <= 1e-12);
        }
    }

    #[test]
    fn soft_threshold_is_nonexpansive((x, y) in (vec_strategy(8), vec_strategy(8)), lam in 0.0..3.0f64) {
        let (a, b) = (prox::soft_threshold(&x, lam), prox::soft_threshold(&y, lam));
        prop_assert!((&a - &b).norm() <= (&x - &y).norm() + 1e-12);
    }

    #[test]
    fn svt_is_nonexpansive(
        (x, y) in (prop::collection::vec(-3.0..3.0f64, 12), prop::collection::vec(-3.0..3.0f64, 12)),
        lam in 0.0..2.0f64,
    ) {
        let (x, y) = (DMatrix::from_vec(3, 4, x), DMatrix::from_vec(3, 4, y));
        let svd = NalgebraSvd::default();
        let a = prox::singular_value_threshold(&x, lam, &svd).unwrap();
        let b = prox::singular_value_threshold(&y, lam, &svd).unwrap();
        prop_assert!((&a - &b).norm() <= (&x - &y).norm() + 1e-10);
    }

    /// The exact mirror step is at least as good as nearby feasible points.
    #[test]
    fn mirror_step_beats_feasible_neighbors(
        v in vec_strategy(4),
        raw_anchor in prop::collection::vec(0.05..1.0f64, 4),
        dirs in prop::collection::vec(vec_strategy(4), 8),
        weight in 0.0..0.5f64,
    ) {
        let anchor = DVector::from_vec(raw_anchor);
        let cases = [
            (DistanceGenerator::euclidean(), Domain::WholeSpace, ProxRule::L1 { weight }),
            (DistanceGenerator::euclidean(), Domain::cube_with_diameter(4, 2.0), ProxRule::L1 { weight }),
            (DistanceGenerator::neg_entropy(), Domain::WholeSpace, ProxRule::L1 { weight }),
            (DistanceGenerator::neg_entropy(), Domain::ball_with_diameter(4, 2.0), ProxRule::L1 { weight }),
            (DistanceGenerator::neg_entropy(), Domain::Simplex { dim: 4 }, ProxRule::Zero),
        ];
        for (gen, domain, rule) in cases {
            let anchor = domain.project(&anchor);
            let loss = CompositeLossStep::new(Arc::new(Linear { coeffs: v.clone() }), rule, 1.0);
            let spec = SubproblemSpec::new(&loss, &gen, &anchor, &v, 0.3, &domain, true).unwrap();
            let y = exact_mirror_prox(&spec).unwrap().point;
            let fy = spec.objective(&y);
            prop_assert!(fy.is_finite());
            for d in &dirs {
                for scale in [1e-1, 1e-3] {
                    let z = domain.project(&(&y + d * scale));
                    let fz = spec.objective(&z);
                    prop_assert!(fy <= fz + 1e-9 * (1.0 + fy.abs()), "{domain:?}: {fy} > {fz}");
                }
            }
        }
    }
}

/// Multiplicative weights on the 2-simplex against a grid refinement of
/// `<v, x> + KL(x, a)/λ`.
#[test]
fn simplex_entropy_step_matches_grid_oracle() {
    let gen = DistanceGenerator::neg_entropy();
    let domain = Domain::Simplex { dim: 3 };
    let mut r = rng::stream_rng(11);
    for _ in 0..20 {
        let v = rng::gaussian_vector(&mut r, 3);
        let a = {
            let raw = DVector::from_fn(3, |_, _| 0.1 + rng::gaussian(&mut r).abs());
            &raw / raw.sum()
        };
        let lam = 0.4;
        let loss =
            CompositeLossStep::new(Arc::new(Linear { coeffs: v.clone() }), ProxRule::Zero, 1.0);
        let spec = SubproblemSpec::new(&loss, &gen, &a, &v, lam, &domain, true).unwrap();
        let y = exact_mirror_prox(&spec).unwrap().point;

        let phi = |p: f64, q: f64| {
            let x = dvector![p, q, 1.0 - p - q];
            v.dot(&x)
                + x.iter()
                    .zip(a.iter())
                    .map(|(xi, ai)| if *xi > 0.0 { xi * (xi / ai).ln() } else { 0.0 })
                    .sum::<f64>()
                    / lam
        };
        let (mut p, mut q, mut h) = (1.0 / 3.0, 1.0 / 3.0, 0.25);
        while h > 1e-9 {
            let mut best = (phi(p, q), p, q);
            for i in -4..=4 {
                for j in -4..=4 {
                    let (pp, qq) = (p + i as f64 * h / 4.0, q + j as f64 * h / 4.0);
                    if pp >= 0.0 && qq >= 0.0 && pp + qq <= 1.0 {
                        let f = phi(pp, qq);
                        if f < best.0 {
                            best = (f, pp, qq);
                        }
                    }
                }
            }
            (p, q) = (best.1, best.2);
            h *= 0.5;
        }
        let grid = dvector![p, q, 1.0 - p - q];
        assert!((&y - &grid).norm() <= 1e-6, "{y} vs {grid}");
    }
}

fn small_example1(seed: u64, domain: Domain) -> GaussMarkovConfig {
    GaussMarkovConfig {
        horizon: 150,
        seed,
        domain,
        ..Default::default()
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = small_example1(4, Domain::WholeSpace);
    let a = experiments::run_example1(&cfg, &[Variant::Inexact]).unwrap();
    let b = experiments::run_example1(&cfg, &[Variant::Inexact]).unwrap();
    let (ra, rb) = (&a.runs[0], &b.runs[0]);
    for (x, y) in ra.trace.records.iter().zip(&rb.trace.records) {
        assert_eq!(x.x, y.x);
        assert_eq!(x.eps, y.eps);
    }
    assert_eq!(ra.rhs, rb.rhs);
}

#[test]
fn bounded_runs_stay_feasible() {
    for seed in 1..=5 {
        let cfg = small_example1(seed, Domain::cube_with_diameter(30, 2.0));
        let out = experiments::run_example1(&cfg, &[Variant::Exact, Variant::Inexact]).unwrap();
        for run in &out.runs {
            for r in &run.trace.records {
                assert!(
                    cfg.domain.contains(&r.x, solver::FEASIBILITY_TOLERANCE),
                    "k = {}",
                    r.k
                );
                assert!(cfg.domain.contains(&r.y, solver::FEASIBILITY_TOLERANCE));
                assert!((&r.x - &r.y).norm() <= r.eps + 1e-15);
            }
            assert!(run.certificate.holds());
        }
    }
}

/// Every prefix entry of the ledger equals a direct recomputation.
#[test]
fn ledger_matches_second_pass() {
    let cfg = small_example1(8, Domain::WholeSpace);
    let out = experiments::run_example1(&cfg, &[Variant::Inexact]).unwrap();
    let run = &out.runs[0];
    let l = &run.ledger;
    let recs = &run.trace.records;
    let opt = |k: usize| &recs[k - 1].optimum.as_ref().unwrap().point;
    for t in 1..=recs.len() {
        let s: Vec<f64> = (1..=t)
            .map(|k| {
                if k == 1 {
                    0.0
                } else {
                    (opt(k) - opt(k - 1)).norm()
                }
            })
            .collect();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
        assert!(close(l.sigma[t - 1], s.iter().sum()));
        assert!(close(l.sigma_bar[t - 1], s.iter().map(|v| v * v).sum()));
        assert!(close(
            l.e[t - 1],
            recs[..t].iter().map(|r| r.gradient_error.norm()).sum()
        ));
        assert!(close(l.p[t - 1], recs[..t].iter().map(|r| r.eps).sum()));
        assert!(close(
            l.p_bar[t - 1],
            recs[..t].iter().map(|r| r.eps * r.eps).sum()
        ));
        assert!(close(l.distances[t - 1], (&recs[t - 1].x - opt(t)).norm()));
        let regret: f64 = recs[..t]
            .iter()
            .map(|r| r.loss - r.optimum.as_ref().unwrap().value)
            .sum();
        assert!(close(run.regret[t - 1], regret));
    }
}

/// On whole-space runs the tracking distances obey the recursion bound.
#[test]
fn distances_obey_recursion_bound() {
    for seed in 1..=4 {
        let cfg = small_example1(seed, Domain::WholeSpace);
        let out = experiments::run_example1(&cfg, &[Variant::Exact, Variant::Inexact]).unwrap();
        for run in &out.runs {
            let l = &run.ledger;
            assert_eq!(l.regime, Regime::WholeSpace);
            let coef = 2.0 * l.g_omega / l.sigma_omega;
            for i in 1..=l.horizon() {
                // At horizon i the look-ahead term s_{i+1} is dropped.
                let mut tau = l.tau_seq[..i].to_vec();
                tau[i - 1] -= coef * l.s[i];
                let bound = regret::recursion_bound(&l.s_seq, &tau, i).unwrap();
                assert!(
                    l.distances[i - 1] <= bound * (1.0 + 1e-9),
                    "seed {seed} i {i}: {} > {bound}",
                    l.distances[i - 1]
                );
            }
        }
    }
}

#[test]
fn mirror_path_matches_proximal_gradient_on_box() {
    let cfg = small_example1(2, Domain::cube_with_diameter(30, 1.0));
    let data = experiments::generate_gauss_markov(&cfg).unwrap();
    let scfg = cfg.solver_config();
    let model = cfg.error_model(Variant::Inexact);
    let a = solver::run(&data.stream, &scfg, &model).unwrap();
    let b = solver::run_proximal_gradient(&data.stream, &scfg, &model).unwrap();
    for (p, q) in a.records.iter().zip(&b.records) {
        assert!((&p.x - &q.x).norm() <= 1e-12);
    }
}

/// `a_{1,t}` over 10⁵ independent streams at a fixed `t`. A single path
/// mixes too slowly at `α = 0.999` for a time average to resolve ±5%.
#[test]
fn ar1_coefficient_has_unit_variance() {
    use rayon::prelude::*;
    let draws: Vec<f64> = (0..100_000u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = GaussMarkovConfig {
                horizon: 20,
                n_coeffs: 2,
                active_set: vec![1],
                input_dim: 1,
                seed,
                ..Default::default()
            };
            experiments::generate_gauss_markov(&cfg).unwrap().truth[19][0]
        })
        .collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    assert!((0.95..=1.05).contains(&var), "variance {var}");
}

/// The per-round inexact rule keeps `‖x_k − y_k‖ ≤ ε_k` and the cap.
#[test]
fn prox_errors_respect_cap() {
    let model = ErrorModel::gaussian(3, 0.05, 0.2);
    for k in 1..=500 {
        let (offset, eps) = model.prox_error(k, 30);
        assert!(offset.norm() <= eps + 1e-15 && eps <= 0.2);
    }
}

/// With static data and no errors the separation iteration settles at the
/// offline optimum and its objective never increases.
#[test]
fn static_separation_reaches_fixed_point() {
    let cfg = SeparationConfig {
        frame_dim: 12,
        window: 6,
        horizon: 1,
        ..Default::default()
    };
    let data = experiments::generate_separation(&cfg).unwrap();
    let m = data.observed[0].clone();
    let step = experiments::separation_step(m.clone(), &cfg);
    let rounds = 3000;
    let stream = ProblemStream::new(vec![step.clone(); rounds], Domain::WholeSpace);
    let scfg: SolverConfig = cfg.solver_config();
    let trace = solver::run(&stream, &scfg, &ErrorModel::zero()).unwrap();
    let values: Vec<f64> = trace.records.iter().map(|r| r.loss).collect();
    for w in values.windows(2) {
        assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "{} > {}", w[1], w[0]);
    }
    let tol = 1e-9 * m.norm();
    let opt = regret::offline_optimum(&step, &Domain::WholeSpace, tol).unwrap();
    let last = &trace.records[rounds - 1].x;
    let scale = opt.point.norm().max(1.0);
    assert!(
        (last - &opt.point).norm() / scale <= 1e-6,
        "{}",
        (last - &opt.point).norm() / scale
    );
}
