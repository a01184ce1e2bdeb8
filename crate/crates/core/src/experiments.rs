//! Reference experiments: sparse tracking of a Gauss–Markov regression, and
//! low-rank plus sparse separation of a synthetic frame stream. A third,
//! configurable drifting-quadratic stream exercises the other domains and the
//! entropy geometry.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bregman::DistanceGenerator;
use crate::losses::{
    CompositeLossStep, Domain, ErrorModel, LeastSquares, ProblemStream, Quadratic, SeparationFit,
};
use crate::prox::ProxRule;
use crate::regret::{self, BoundLedger, Certificate, Regime, RegretError};
use crate::rng::{self, SubSeed};
use crate::solver::{self, fmt_f64, Optimum, RunError, RunTrace, SolverConfig, TraceIoError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Regret(#[from] RegretError),
    #[error(transparent)]
    Io(#[from] TraceIoError),
}

/// Error-free or noisy run of the same stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Exact,
    Inexact,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Exact => "exact",
            Variant::Inexact => "inexact",
        }
    }

    pub fn error_model(self, seed: u64, std: f64, prox_cap: f64) -> ErrorModel {
        match self {
            Variant::Exact => ErrorModel::zero(),
            Variant::Inexact => ErrorModel::gaussian(seed, std, prox_cap),
        }
    }
}

/// A finished run with optima, regret and bound attached.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub variant: Variant,
    pub trace: RunTrace,
    pub regret: Vec<f64>,
    pub ledger: BoundLedger,
    pub rhs: Vec<f64>,
    pub certificate: Certificate,
}

impl ExperimentRun {
    pub fn final_regret(&self) -> f64 {
        self.regret.last().copied().unwrap_or(0.0)
    }

    /// `R_T / T` at horizon `t` (1-based).
    pub fn average_regret(&self, t: usize) -> f64 {
        self.regret[t - 1] / t as f64
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<(), TraceIoError> {
        solver::write_trace_csv(&self.trace, out)
    }

    pub fn write_ledger_csv<W: Write>(&self, out: W) -> Result<(), TraceIoError> {
        regret::write_ledger_csv(&self.ledger, &self.regret, &self.rhs, out)
    }

    pub fn write_iterates_csv<W: Write>(&self, out: W) -> Result<(), TraceIoError> {
        solver::write_iterates_csv(&self.trace, out)
    }
}

/// Runs the solver on `stream`, attaches precomputed optima and evaluates
/// the bound of the stream's regime.
pub fn run_on_stream(
    stream: &ProblemStream,
    config: &SolverConfig,
    model: &ErrorModel,
    optima: &[Optimum],
    variant: Variant,
) -> Result<ExperimentRun, ExperimentError> {
    let mut trace = solver::run(stream, config, model)?;
    regret::attach_optima(&mut trace, optima)?;
    finish_run(trace, stream.domain(), config, variant)
}

/// Regret, ledger and certificate of a trace with optima attached.
pub fn finish_run(
    trace: RunTrace,
    domain: &Domain,
    config: &SolverConfig,
    variant: Variant,
) -> Result<ExperimentRun, ExperimentError> {
    let regret = regret::dynamic_regret(&trace)?;
    let ledger = regret::ledger_from_trace(&trace, &config.generator, config.step_size, domain)?;
    let rhs = regret::theorem_rhs(&ledger, Regime::of(domain))?;
    let certificate = regret::certify(&regret, &rhs, regret::COMPARISON_TOLERANCE);
    Ok(ExperimentRun {
        variant,
        trace,
        regret,
        ledger,
        rhs,
        certificate,
    })
}

fn run_variants(
    stream: &ProblemStream,
    config: &SolverConfig,
    optima: &[Optimum],
    variants: &[Variant],
    model_of: impl Fn(Variant) -> ErrorModel + Sync,
) -> Result<Vec<ExperimentRun>, ExperimentError> {
    variants
        .par_iter()
        .map(|v| run_on_stream(stream, config, &model_of(*v), optima, *v))
        .collect()
}

// ---------------------------------------------------------------------------
// Gauss–Markov sparse regression

#[derive(Debug, Clone, PartialEq)]
pub struct GaussMarkovConfig {
    pub n_coeffs: usize,
    pub input_dim: usize,
    pub alpha: f64,
    /// 1-based indices of the nonzero coefficients.
    pub active_set: Vec<usize>,
    pub obs_noise_std: f64,
    pub eta: f64,
    pub step_size: f64,
    /// Standard deviation of `e_k` and of the prox error radius.
    pub error_std: f64,
    /// Cap on the prox error radius `ε_k`.
    pub prox_cap: f64,
    pub horizon: usize,
    pub seed: u64,
    pub domain: Domain,
}

impl Default for GaussMarkovConfig {
    fn default() -> Self {
        Self {
            n_coeffs: 30,
            input_dim: 2,
            alpha: 0.999,
            active_set: vec![1, 2],
            obs_noise_std: 0.1,
            eta: 0.05,
            step_size: 0.01,
            error_std: 0.05,
            prox_cap: 0.2,
            horizon: 1000,
            seed: 1,
            domain: Domain::WholeSpace,
        }
    }
}

impl GaussMarkovConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if self.n_coeffs == 0 || self.input_dim == 0 || self.horizon == 0 {
            return bad("n_coeffs, input_dim and horizon must be positive".into());
        }
        if self
            .active_set
            .iter()
            .any(|i| *i == 0 || *i > self.n_coeffs)
        {
            return bad(format!(
                "active_set must be a subset of 1..={}",
                self.n_coeffs
            ));
        }
        if self.obs_noise_std < 0.0 || self.eta < 0.0 || self.error_std < 0.0 || self.prox_cap < 0.0
        {
            return bad("noise levels, eta and prox_cap must be nonnegative".into());
        }
        if let Some(d) = self.domain.dim() {
            if d != self.n_coeffs {
                return bad(format!(
                    "domain dimension {d} differs from n_coeffs {}",
                    self.n_coeffs
                ));
            }
        }
        Ok(())
    }

    pub fn error_model(&self, variant: Variant) -> ErrorModel {
        variant.error_model(self.seed, self.error_std, self.prox_cap)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let x0 = self.domain.project(&DVector::zeros(self.n_coeffs));
        SolverConfig::new(self.step_size, DistanceGenerator::euclidean(), x0)
    }
}

#[derive(Debug, Clone)]
pub struct GaussMarkovData {
    pub stream: ProblemStream,
    /// `a_t` for `t = 1..=T`.
    pub truth: Vec<DVector<f64>>,
}

/// Draws `a_0`, then for each `t`: `a_t = α a_{t-1} + v_t` on the active
/// set, inputs `X_t` with i.i.d. `N(0, 1)` entries (row `j` holds coordinate
/// `j` of every `x_{i,t}`), and `y_t = X_t a_t + w_t`.
pub fn generate_gauss_markov(cfg: &GaussMarkovConfig) -> Result<GaussMarkovData, ExperimentError> {
    cfg.validate()?;
    let mut r = rng::stream_rng(SubSeed::Stream.derive(cfg.seed));
    let n = cfg.n_coeffs;
    let active: Vec<usize> = cfg.active_set.iter().map(|i| i - 1).collect();
    let drive = (1.0 - cfg.alpha * cfg.alpha).sqrt();
    let mut a = DVector::zeros(n);
    for &i in &active {
        a[i] = rng::gaussian(&mut r);
    }
    let mut steps = Vec::with_capacity(cfg.horizon);
    let mut truth = Vec::with_capacity(cfg.horizon);
    for _ in 0..cfg.horizon {
        for &i in &active {
            a[i] = cfg.alpha * a[i] + drive * rng::gaussian(&mut r);
        }
        let x = rng::gaussian_matrix(&mut r, cfg.input_dim, n);
        let w = rng::gaussian_vector(&mut r, cfg.input_dim) * cfg.obs_noise_std;
        let y = &x * &a + w;
        let ls = LeastSquares::new(x, y);
        let l = ls.smoothness();
        steps.push(CompositeLossStep::new(
            Arc::new(ls),
            ProxRule::L1 { weight: cfg.eta },
            l,
        ));
        truth.push(a.clone());
    }
    Ok(GaussMarkovData {
        stream: ProblemStream::new(steps, cfg.domain.clone()),
        truth,
    })
}

#[derive(Debug, Clone)]
pub struct Example1Outcome {
    pub data: GaussMarkovData,
    pub optima: Vec<Optimum>,
    pub runs: Vec<ExperimentRun>,
}

impl Example1Outcome {
    pub fn run(&self, variant: Variant) -> Option<&ExperimentRun> {
        self.runs.iter().find(|r| r.variant == variant)
    }
}

/// Generates the stream, computes its optima once and runs every requested
/// variant concurrently.
pub fn run_example1(
    cfg: &GaussMarkovConfig,
    variants: &[Variant],
) -> Result<Example1Outcome, ExperimentError> {
    let data = generate_gauss_markov(cfg)?;
    let optima = regret::compute_optima(&data.stream, regret::OPTIMUM_TOLERANCE)?;
    let runs = run_variants(&data.stream, &cfg.solver_config(), &optima, variants, |v| {
        cfg.error_model(v)
    })?;
    Ok(Example1Outcome { data, optima, runs })
}

/// Mean of `|a_{i,t} − â_{i,t}|` over the active set and `t ∈ [from, to]`.
pub fn tracking_error(
    truth: &[DVector<f64>],
    estimates: &[&DVector<f64>],
    active_set: &[usize],
    from: usize,
    to: usize,
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in from..=to.min(truth.len()) {
        for &i in active_set {
            sum += (truth[t - 1][i - 1] - estimates[t - 1][i - 1]).abs();
            count += 1;
        }
    }
    sum / count.max(1) as f64
}

/// Columns `t, i, a_true, a_pred`.
pub fn write_coefficients_csv<W: Write>(
    truth: &[DVector<f64>],
    trace: &RunTrace,
    out: W,
) -> Result<(), TraceIoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "i", "a_true", "a_pred"])?;
    for (rec, a) in trace.records.iter().zip(truth) {
        for i in 0..a.len() {
            w.write_record([
                rec.k.to_string(),
                (i + 1).to_string(),
                fmt_f64(a[i]),
                fmt_f64(rec.x[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Low-rank plus sparse separation

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationConfig {
    /// Pixels per frame (columns of `M_k`).
    pub frame_dim: usize,
    /// Frames per window (rows of `M_k`).
    pub window: usize,
    pub mu_l: f64,
    pub mu_s: f64,
    pub lambda_l: f64,
    pub lambda_s: f64,
    pub alpha_l: f64,
    pub alpha_s: f64,
    pub synth_rank: usize,
    pub synth_sparsity: f64,
    pub horizon: usize,
    pub seed: u64,
    /// Largest background singular value; the `j`-th is `scale / 2^j`.
    pub background_scale: f64,
    /// Rotation angle of the background subspaces per round.
    pub rotation: f64,
    pub foreground_amplitude: f64,
    /// Probability that a foreground pixel moves in a given round.
    pub turnover: f64,
    pub noise_std: f64,
    /// Detection threshold as a fraction of `amplitude / (1 + μ_S)`.
    pub support_threshold: f64,
    pub error_std: f64,
    pub prox_cap: f64,
    /// Rounds between matrix snapshots.
    pub snapshot_every: usize,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            frame_dim: 64,
            window: 16,
            mu_l: 0.005,
            mu_s: 2.0,
            lambda_l: 1e5,
            lambda_s: 0.034,
            alpha_l: 0.2,
            alpha_s: 0.2,
            synth_rank: 2,
            synth_sparsity: 0.05,
            horizon: 200,
            seed: 1,
            background_scale: 1e5,
            rotation: 0.01,
            foreground_amplitude: 2e4,
            turnover: 0.02,
            noise_std: 1.0,
            support_threshold: 0.5,
            error_std: 0.0,
            prox_cap: 0.0,
            snapshot_every: 50,
        }
    }
}

impl SeparationConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        let small = self.window.min(self.frame_dim);
        if self.synth_rank == 0 || 2 * self.synth_rank > small {
            return bad(format!(
                "synth_rank = {} needs 1 ≤ 2·rank ≤ min(window, frame_dim) = {small}",
                self.synth_rank
            ));
        }
        if !(self.synth_sparsity >= 0.0 && self.synth_sparsity < 1.0) {
            return bad(format!(
                "synth_sparsity = {} must lie in [0, 1)",
                self.synth_sparsity
            ));
        }
        if self.alpha_l != self.alpha_s {
            return bad(format!(
                "alpha_l = {} and alpha_s = {} must agree (one step size for the joint variable)",
                self.alpha_l, self.alpha_s
            ));
        }
        if !(0.0..=1.0).contains(&self.turnover) {
            return bad(format!("turnover = {} must lie in [0, 1]", self.turnover));
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.window, self.frame_dim)
    }

    pub fn spectrum(&self) -> Vec<f64> {
        (0..self.synth_rank)
            .map(|j| self.background_scale / 2f64.powi(j as i32))
            .collect()
    }

    pub fn detection_threshold(&self) -> f64 {
        self.support_threshold * self.foreground_amplitude / (1.0 + self.mu_s)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let (r, c) = self.shape();
        SolverConfig::new(
            self.alpha_l,
            DistanceGenerator::euclidean(),
            DVector::zeros(2 * r * c),
        )
    }

    pub fn error_model(&self, variant: Variant) -> ErrorModel {
        variant.error_model(self.seed, self.error_std, self.prox_cap)
    }
}

#[derive(Debug, Clone)]
pub struct SeparationData {
    pub stream: ProblemStream,
    pub low_rank: Vec<DMatrix<f64>>,
    pub sparse: Vec<DMatrix<f64>>,
    pub observed: Vec<DMatrix<f64>>,
}

/// Orthonormal `P, Q ∈ ℝ^{n×rank}` with `PᵀQ = 0`.
fn orthonormal_pair<R: Rng + ?Sized>(
    r: &mut R,
    n: usize,
    rank: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let q = rng::gaussian_matrix(r, n, 2 * rank).qr().q();
    (
        q.columns(0, rank).into_owned(),
        q.columns(rank, rank).into_owned(),
    )
}

/// Background `U_k diag(σ) V_kᵀ` with `U_k = cos(kθ) P + sin(kθ) Q` (same for
/// `V_k`), a foreground of `±amplitude` pixels that move with probability
/// `turnover`, and Gaussian noise.
pub fn generate_separation(cfg: &SeparationConfig) -> Result<SeparationData, ExperimentError> {
    cfg.validate()?;
    let mut r = rng::stream_rng(SubSeed::Stream.derive(cfg.seed));
    let (rows, cols) = cfg.shape();
    let rank = cfg.synth_rank;
    let (pu, qu) = orthonormal_pair(&mut r, rows, rank);
    let (pv, qv) = orthonormal_pair(&mut r, cols, rank);
    let sigma = DMatrix::from_diagonal(&DVector::from_vec(cfg.spectrum()));

    let cells = rows * cols;
    let nnz = (cfg.synth_sparsity * cells as f64).round() as usize;
    let mut slots: Vec<usize> = index::sample(&mut r, cells, nnz).into_vec();
    let signs: Vec<f64> = (0..nnz)
        .map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let mut occupied = vec![false; cells];
    for &s in &slots {
        occupied[s] = true;
    }

    let mut low_rank = Vec::with_capacity(cfg.horizon);
    let mut sparse = Vec::with_capacity(cfg.horizon);
    let mut observed_all = Vec::with_capacity(cfg.horizon);
    let mut steps = Vec::with_capacity(cfg.horizon);
    for k in 1..=cfg.horizon {
        let angle = k as f64 * cfg.rotation;
        let (c, s) = (angle.cos(), angle.sin());
        let u = &pu * c + &qu * s;
        let v = &pv * c + &qv * s;
        let background = &u * &sigma * v.transpose();

        for pos in slots.iter_mut() {
            if nnz < cells && r.random_bool(cfg.turnover) {
                let next = loop {
                    let cand = r.random_range(0..cells);
                    if !occupied[cand] {
                        break cand;
                    }
                };
                occupied[*pos] = false;
                occupied[next] = true;
                *pos = next;
            }
        }
        let mut foreground = DMatrix::zeros(rows, cols);
        for (pos, sign) in slots.iter().zip(&signs) {
            foreground[*pos] = sign * cfg.foreground_amplitude;
        }
        let noise = rng::gaussian_matrix(&mut r, rows, cols) * cfg.noise_std;
        let observed = &background + &foreground + noise;

        steps.push(separation_step(observed.clone(), cfg));
        low_rank.push(background);
        sparse.push(foreground);
        observed_all.push(observed);
    }
    Ok(SeparationData {
        stream: ProblemStream::new(steps, Domain::WholeSpace),
        low_rank,
        sparse,
        observed: observed_all,
    })
}

/// `‖M − L − S‖² + μ_L‖L‖² + μ_S‖S‖² + λ_L‖L‖_* + λ_S‖vec S‖₁`.
pub fn separation_step(observed: DMatrix<f64>, cfg: &SeparationConfig) -> CompositeLossStep {
    let (rows, cols) = observed.shape();
    let fit = SeparationFit {
        observed,
        mu_low_rank: cfg.mu_l,
        mu_sparse: cfg.mu_s,
    };
    let l = fit.smoothness();
    CompositeLossStep::new(
        Arc::new(fit),
        ProxRule::LowRankPlusSparse {
            rows,
            cols,
            nuclear_weight: cfg.lambda_l,
            l1_weight: cfg.lambda_s,
        },
        l,
    )
}

/// Recovered `(L_k, S_k)` at round `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub k: usize,
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl SupportScore {
    pub fn f1(&self) -> f64 {
        let tp = self.true_positives as f64;
        let denom = 2.0 * tp + (self.false_positives + self.false_negatives) as f64;
        if denom == 0.0 {
            1.0
        } else {
            2.0 * tp / denom
        }
    }

    pub fn add(&mut self, estimate: &DMatrix<f64>, truth: &DMatrix<f64>, threshold: f64) {
        for (e, t) in estimate.iter().zip(truth.iter()) {
            match (e.abs() > threshold, *t != 0.0) {
                (true, true) => self.true_positives += 1,
                (true, false) => self.false_positives += 1,
                (false, true) => self.false_negatives += 1,
                (false, false) => {}
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Example2Outcome {
    pub data: SeparationData,
    pub run: ExperimentRun,
    /// Support detection pooled over the second half of the horizon.
    pub support: SupportScore,
    pub snapshots: Vec<Snapshot>,
}

/// Offline-optimum tolerance scaled to the data magnitude.
pub fn separation_tolerance(data: &SeparationData) -> f64 {
    let scale = data.observed.iter().map(|m| m.norm()).fold(1.0, f64::max);
    regret::OPTIMUM_TOLERANCE * scale
}

/// Foreground support score over the second half of the run, and the
/// recovered blocks every `snapshot_every` rounds (plus the last one).
pub fn score_separation(
    cfg: &SeparationConfig,
    data: &SeparationData,
    trace: &RunTrace,
) -> (SupportScore, Vec<Snapshot>) {
    let (rows, cols) = cfg.shape();
    let threshold = cfg.detection_threshold();
    let mut support = SupportScore {
        true_positives: 0,
        false_positives: 0,
        false_negatives: 0,
    };
    let mut snapshots = Vec::new();
    let last = trace.records.last().map_or(0, |r| r.k);
    for rec in &trace.records {
        let (l, s) = crate::losses::split_blocks(&rec.x, rows, cols);
        if rec.k > cfg.horizon / 2 {
            support.add(&s, &data.sparse[rec.k - 1], threshold);
        }
        if cfg.snapshot_every > 0 && (rec.k % cfg.snapshot_every == 0 || rec.k == last) {
            snapshots.push(Snapshot {
                k: rec.k,
                low_rank: l,
                sparse: s,
            });
        }
    }
    (support, snapshots)
}

pub fn run_example2(
    cfg: &SeparationConfig,
    variant: Variant,
) -> Result<Example2Outcome, ExperimentError> {
    let data = generate_separation(cfg)?;
    let optima = regret::compute_optima(&data.stream, separation_tolerance(&data))?;
    let run = run_on_stream(
        &data.stream,
        &cfg.solver_config(),
        &cfg.error_model(variant),
        &optima,
        variant,
    )?;
    let (support, snapshots) = score_separation(cfg, &data, &run.trace);
    Ok(Example2Outcome {
        data,
        run,
        support,
        snapshots,
    })
}

/// Dense CSV grid, one matrix row per line.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, out: W) -> Result<(), TraceIoError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Drifting quadratic

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorChoice {
    Euclidean,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainChoice {
    WholeSpace,
    Box,
    Ball,
    Simplex,
}

/// `g_k(x) = (c/2)‖x − m_k‖²` with a random-walk center `m_k`, and
/// `h_k = η‖x‖₁` (zero on the simplex, where `ℓ1` is constant).
#[derive(Debug, Clone, PartialEq)]
pub struct DriftConfig {
    pub dim: usize,
    pub horizon: usize,
    pub seed: u64,
    pub drift: f64,
    pub curvature: f64,
    pub eta: f64,
    pub step_size: f64,
    pub generator: GeneratorChoice,
    pub domain: DomainChoice,
    pub diameter: f64,
    pub error_std: f64,
    pub prox_cap: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            horizon: 300,
            seed: 1,
            drift: 0.01,
            curvature: 1.0,
            eta: 0.01,
            step_size: 0.5,
            generator: GeneratorChoice::Euclidean,
            domain: DomainChoice::WholeSpace,
            diameter: 4.0,
            error_std: 0.01,
            prox_cap: 0.04,
        }
    }
}

impl DriftConfig {
    pub fn domain(&self) -> Domain {
        match self.domain {
            DomainChoice::WholeSpace => Domain::WholeSpace,
            DomainChoice::Box => Domain::cube_with_diameter(self.dim, self.diameter),
            DomainChoice::Ball => Domain::ball_with_diameter(self.dim, self.diameter),
            DomainChoice::Simplex => Domain::Simplex { dim: self.dim },
        }
    }

    pub fn distance_generator(&self) -> DistanceGenerator {
        match self.generator {
            GeneratorChoice::Euclidean => DistanceGenerator::euclidean(),
            GeneratorChoice::Entropy => DistanceGenerator::neg_entropy(),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let start = DVector::from_element(self.dim, 1.0 / self.dim as f64);
        SolverConfig::new(
            self.step_size,
            self.distance_generator(),
            self.domain().project(&start),
        )
    }

    pub fn error_model(&self, variant: Variant) -> ErrorModel {
        variant.error_model(self.seed, self.error_std, self.prox_cap)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.dim == 0 || self.horizon == 0 {
            return Err(ExperimentError::Config(
                "dim and horizon must be positive".into(),
            ));
        }
        if !(self.curvature > 0.0 && self.diameter > 0.0) {
            return Err(ExperimentError::Config(
                "curvature and diameter must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn generate_drift(cfg: &DriftConfig) -> Result<ProblemStream, ExperimentError> {
    cfg.validate()?;
    let mut r = rng::stream_rng(SubSeed::Stream.derive(cfg.seed));
    let domain = cfg.domain();
    let rule = match cfg.domain {
        DomainChoice::Simplex => ProxRule::Zero,
        _ => ProxRule::L1 { weight: cfg.eta },
    };
    let mut center = DVector::from_element(cfg.dim, 1.0 / cfg.dim as f64)
        + rng::gaussian_vector(&mut r, cfg.dim) * 0.1;
    let steps = (0..cfg.horizon)
        .map(|_| {
            center += rng::gaussian_vector(&mut r, cfg.dim) * cfg.drift;
            let q = Quadratic {
                center: center.clone(),
                curvature: cfg.curvature,
            };
            CompositeLossStep::new(Arc::new(q), rule.clone(), cfg.curvature)
        })
        .collect();
    Ok(ProblemStream::new(steps, domain))
}

pub fn run_drift(
    cfg: &DriftConfig,
    variants: &[Variant],
) -> Result<(ProblemStream, Vec<ExperimentRun>), ExperimentError> {
    let stream = generate_drift(cfg)?;
    let optima = regret::compute_optima(&stream, regret::OPTIMUM_TOLERANCE)?;
    let runs = run_variants(&stream, &cfg.solver_config(), &optima, variants, |v| {
        cfg.error_model(v)
    })?;
    Ok((stream, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inactive_coefficients_stay_zero() {
        let cfg = GaussMarkovConfig {
            horizon: 50,
            ..Default::default()
        };
        let data = generate_gauss_markov(&cfg).unwrap();
        for a in &data.truth {
            assert!(a.iter().skip(2).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn stationary_variance() {
        // Var(a) = α² Var(a) + (1 − α²) has the fixed point 1.
        let alpha: f64 = 0.999;
        let mut v = 1.0;
        for _ in 0..10 {
            v = alpha * alpha * v + (1.0 - alpha * alpha);
        }
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn separation_background_spectrum() {
        let cfg = SeparationConfig {
            horizon: 3,
            ..Default::default()
        };
        let data = generate_separation(&cfg).unwrap();
        for b in &data.low_rank {
            let sv = {
                let mut s: Vec<f64> = b.singular_values().iter().cloned().collect();
                s.sort_by(|a, b| b.total_cmp(a));
                s
            };
            assert!((sv[0] - 1e5).abs() <= 1e-10 * 1e5);
            assert!((sv[1] - 5e4).abs() <= 1e-10 * 1e5);
            assert!(sv[2] <= 1e-8);
        }
    }

    #[test]
    fn separation_config_rejects_unequal_steps() {
        let cfg = SeparationConfig {
            alpha_s: 0.1,
            ..Default::default()
        };
        assert!(generate_separation(&cfg).is_err());
    }
}
