//! Fixtures shared by the benchmarks in `benches/`.

use ompd_core::experiments::{self, GaussMarkovConfig, SeparationConfig, Variant};
use ompd_core::regret;
use ompd_core::rng;
use ompd_core::{DMatrix, DVector, RunTrace, SolverConfig};

pub fn random_vector(n: usize, seed: u64) -> DVector<f64> {
    rng::gaussian_vector(&mut rng::stream_rng(seed), n)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    rng::gaussian_matrix(&mut rng::stream_rng(seed), rows, cols)
}

pub fn gauss_markov(horizon: usize) -> experiments::GaussMarkovData {
    let cfg = GaussMarkovConfig {
        horizon,
        ..Default::default()
    };
    experiments::generate_gauss_markov(&cfg).expect("valid default config")
}

/// Inexact Gauss–Markov trace with optima attached.
pub fn solved_trace(horizon: usize) -> (RunTrace, SolverConfig) {
    let cfg = GaussMarkovConfig {
        horizon,
        ..Default::default()
    };
    let out = experiments::run_example1(&cfg, &[Variant::Inexact]).expect("run");
    (out.runs[0].trace.clone(), cfg.solver_config())
}

pub fn separation(horizon: usize) -> (experiments::SeparationData, SeparationConfig) {
    let cfg = SeparationConfig {
        horizon,
        ..Default::default()
    };
    (
        experiments::generate_separation(&cfg).expect("valid default config"),
        cfg,
    )
}

pub fn optimum_tolerance() -> f64 {
    regret::OPTIMUM_TOLERANCE
}
