//! Dynamic regret, per-round optima and computable regret bounds.
//!
//! With `s_k = ‖x_k* − x_{k-1}*‖`, `u_k = ‖x_k − x_k*‖` and the realized
//! errors, every round satisfies
//!
//! ```text
//! f_k(x_k) − f_k(x_k*) ≤ D ε_k + (V(x_{k-1}*, x_{k-1}) − V(x_k*, x_k)) / λ
//!                      + (‖e_k‖ + G ε_k/λ) u_k + (G − σ/2) s_k² / λ
//!                      + G s_k u_{k-1} / λ + c_k
//! ```
//!
//! where `c_k = max(0, L_k/2 − σ/(2λ)) ‖x_k − x_{k-1}‖²` accounts for
//! `V(x_k, x_{k-1}) ≥ (σ/2)‖x_k − x_{k-1}‖²`. It vanishes when `λ ≤ σ/L_k`.
//! Summing gives the inequality behind both regimes of [`theorem_rhs`].
//!
//! The optimum before the first round is taken to be `x_1*`, so `s_1 = 0`.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::bregman::{self, DistanceGenerator};
use crate::losses::{CompositeLossStep, Domain, ProblemStream};
use crate::prox::{self, ProxError};
use crate::solver::{fmt_f64, Optimum, RunTrace, TraceIoError};

/// Default stopping residual of [`offline_optimum`].
pub const OPTIMUM_TOLERANCE: f64 = 1e-9;
pub const OPTIMUM_MAX_ITERATIONS: usize = 1_000_000;
/// Per-round slack allowed when comparing regret with a bound.
pub const COMPARISON_TOLERANCE: f64 = 1e-6;
/// Distance under which a point counts as touching the boundary of `Ω`.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegretError {
    #[error("round {0} has no optimum attached")]
    MissingOptimum(usize),
    #[error("offline optimum stopped after {iterations} iterations with residual {residual:e}")]
    OptimumNotConverged { iterations: usize, residual: f64 },
    #[error("round {k}: f_k(x_k) is {gap:e} below f_k(x_k*)")]
    OptimumSanity { k: usize, gap: f64 },
    #[error(
        "bound requested for the {requested:?} regime but the ledger was built for {ledger:?}"
    )]
    RegimeMismatch { requested: Regime, ledger: Regime },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Prox(#[from] ProxError),
}

/// Which theorem applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Bounded,
    WholeSpace,
}

impl Regime {
    pub fn of(domain: &Domain) -> Self {
        if domain.is_bounded() {
            Regime::Bounded
        } else {
            Regime::WholeSpace
        }
    }
}

/// Minimizer of `f = g + h` over `Ω` by FISTA with backtracking and
/// gradient-based restarts, started at the projection of the origin.
pub fn offline_optimum(
    step: &CompositeLossStep,
    domain: &Domain,
    tol: f64,
) -> Result<Optimum, RegretError> {
    let start = domain.project(&DVector::zeros(step.dim()));
    offline_optimum_from(step, domain, tol, &start)
}

/// [`offline_optimum`] from a given feasible start.
///
/// Stops when the subgradient `(w − x⁺)/t + ∇g(x⁺) − ∇g(w) ∈ ∂f(x⁺)` has norm
/// at most `tol`; this also bounds the composite gradient mapping at `x⁺`.
pub fn offline_optimum_from(
    step: &CompositeLossStep,
    domain: &Domain,
    tol: f64,
    start: &DVector<f64>,
) -> Result<Optimum, RegretError> {
    let rule = &step.regularizer;
    let mut x = start.clone();
    let mut w = x.clone();
    let mut theta = 1.0_f64;
    let mut t = 1.0 / step.smoothness.max(f64::MIN_POSITIVE);
    let mut residual = f64::INFINITY;
    for _ in 0..OPTIMUM_MAX_ITERATIONS {
        let gw = step.smooth_gradient(&w);
        let (cand, gc) = loop {
            let cand = prox::prox_onto_domain(rule, domain, &(&w - &gw * t), t)?;
            let gc = step.smooth_gradient(&cand);
            if t * (&gc - &gw).norm() <= (&cand - &w).norm() || t < 1e-300 {
                break (cand, gc);
            }
            t *= 0.5;
        };
        residual = ((&w - &cand) / t + &gc - &gw).norm();
        if residual <= tol {
            let value = step.value(&cand);
            return Ok(Optimum { point: cand, value });
        }
        // Gradient-based restart: drop momentum once it points uphill.
        if (&w - &cand).dot(&(&cand - &x)) > 0.0 {
            theta = 1.0;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        w = &cand + (&cand - &x) * ((theta - 1.0) / theta_next);
        theta = theta_next;
        x = cand;
    }
    Err(RegretError::OptimumNotConverged {
        iterations: OPTIMUM_MAX_ITERATIONS,
        residual,
    })
}

/// Optimum of every round of `stream`. Rounds are split into short chunks
/// solved concurrently; inside a chunk each solve is warm-started from the
/// previous optimum.
pub fn compute_optima(stream: &ProblemStream, tol: f64) -> Result<Vec<Optimum>, RegretError> {
    const CHUNK: usize = 8;
    let domain = stream.domain();
    let chunks: Vec<Result<Vec<Optimum>, RegretError>> = stream
        .steps()
        .par_chunks(CHUNK)
        .map(|steps| {
            let mut out = Vec::with_capacity(steps.len());
            let mut start = domain.project(&DVector::zeros(stream.dim()));
            for step in steps {
                let opt = offline_optimum_from(step, domain, tol, &start)?;
                start = opt.point.clone();
                out.push(opt);
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(stream.horizon());
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

pub fn attach_optima(trace: &mut RunTrace, optima: &[Optimum]) -> Result<(), RegretError> {
    if optima.len() < trace.horizon() {
        return Err(RegretError::MissingOptimum(optima.len() + 1));
    }
    for (r, o) in trace.records.iter_mut().zip(optima) {
        r.optimum = Some(o.clone());
    }
    Ok(())
}

/// Cumulative regret `R_1, …, R_T`.
pub fn dynamic_regret(trace: &RunTrace) -> Result<Vec<f64>, RegretError> {
    let mut acc = 0.0;
    trace
        .records
        .iter()
        .map(|r| {
            let opt = r.optimum.as_ref().ok_or(RegretError::MissingOptimum(r.k))?;
            acc += r.loss - opt.value;
            Ok(acc)
        })
        .collect()
}

/// Fails if some `f_k(x_k)` lies more than `tol` below `f_k(x_k*)`.
pub fn check_optimum_sanity(trace: &RunTrace, tol: f64) -> Result<(), RegretError> {
    for r in &trace.records {
        let opt = r.optimum.as_ref().ok_or(RegretError::MissingOptimum(r.k))?;
        let gap = opt.value - r.loss;
        if gap > tol {
            return Err(RegretError::OptimumSanity { k: r.k, gap });
        }
    }
    Ok(())
}

/// Realized bound terms of one run. Every `Vec` holds prefix values: entry
/// `j` belongs to the horizon `T' = j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundLedger {
    pub regime: Regime,
    pub step_size: f64,
    pub sigma_omega: f64,
    pub g_omega: f64,
    /// Diameter `R` of `Ω` (bounded regime only).
    pub diameter: Option<f64>,
    /// `s_1, …, s_T, s_{T+1} = 0`.
    pub s: Vec<f64>,
    /// `u_k = ‖x_k − x_k*‖`.
    pub distances: Vec<f64>,
    /// `‖x_0* − x_0‖`.
    pub initial_distance: f64,
    /// `V(x_0*, x_0)`.
    pub initial_divergence: f64,
    pub e_norms: Vec<f64>,
    pub eps: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sigma_bar: Vec<f64>,
    pub e: Vec<f64>,
    pub e_bar: Vec<f64>,
    pub p: Vec<f64>,
    pub p_bar: Vec<f64>,
    /// `max_{k ≤ T'} B_k`.
    pub b: Vec<f64>,
    /// `D` evaluated on the first `T'` rounds.
    pub d: Vec<f64>,
    /// `Σ_{k ≤ T'} max(0, L_k/2 − σ/(2λ)) ‖x_k − x_{k-1}‖²`.
    pub step_excess: Vec<f64>,
    /// `Z_0 = (V(x_0*, x_0) + G s_1 ‖x_0* − x_0‖) / λ`.
    pub z0: f64,
    /// `S_1, …, S_T`.
    pub s_seq: Vec<f64>,
    /// `τ_1, …, τ_T`.
    pub tau_seq: Vec<f64>,
}

impl BoundLedger {
    pub fn horizon(&self) -> usize {
        self.distances.len()
    }

    /// `D` with the prefix `T'`.
    pub fn d_at(&self, horizon: usize) -> f64 {
        self.d[horizon - 1]
    }
}

/// Builds the ledger of a trace whose optima are attached.
///
/// In the bounded regime `D = 2B + max_k q_k`, where `q_k` bounds the norm of
/// `∇h_k(y_k) + ∇g_k(x_{k-1}) + e_k + ∇V(y_k, x_{k-1})/λ` for the subgradient
/// that certifies optimality of `y_k`: zero when `y_k` is interior and
/// `B_k + ‖∇g_k(x_{k-1}) + e_k + ∇V(y_k, x_{k-1})/λ‖` otherwise. In the
/// whole space `D = 2B`.
pub fn ledger_from_trace(
    trace: &RunTrace,
    gen: &DistanceGenerator,
    lam: f64,
    domain: &Domain,
) -> Result<BoundLedger, RegretError> {
    if !(lam > 0.0) {
        return Err(RegretError::Precondition(format!(
            "step size {lam} must be positive"
        )));
    }
    let n = trace.horizon();
    let regime = Regime::of(domain);
    let sigma = gen.sigma_omega();
    let g = gen.g_omega();
    let mut optima = Vec::with_capacity(n);
    for r in &trace.records {
        optima.push(
            &r.optimum
                .as_ref()
                .ok_or(RegretError::MissingOptimum(r.k))?
                .point,
        );
    }
    let x0 = &trace.initial_point;
    let (initial_distance, initial_divergence) = match optima.first() {
        Some(first) => (
            (*first - x0).norm(),
            bregman::divergence(gen, first, x0).map_err(ProxError::from)?,
        ),
        None => (0.0, 0.0),
    };

    let mut s = vec![0.0; n + 1];
    for k in 1..n {
        s[k] = (optima[k] - optima[k - 1]).norm();
    }

    let mut ledger = BoundLedger {
        regime,
        step_size: lam,
        sigma_omega: sigma,
        g_omega: g,
        diameter: domain.diameter(),
        initial_distance,
        initial_divergence,
        z0: (initial_divergence + g * s[0] * initial_distance) / lam,
        distances: Vec::with_capacity(n),
        e_norms: Vec::with_capacity(n),
        eps: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        sigma_bar: Vec::with_capacity(n),
        e: Vec::with_capacity(n),
        e_bar: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        p_bar: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        step_excess: Vec::with_capacity(n),
        s_seq: Vec::with_capacity(n),
        tau_seq: Vec::with_capacity(n),
        s: s.clone(),
    };

    let (mut sum_s, mut sum_s2, mut sum_e, mut sum_e2, mut sum_p, mut sum_p2) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut b_max, mut q_max, mut excess) = (0.0_f64, 0.0_f64, 0.0);
    for (j, r) in trace.records.iter().enumerate() {
        let anchor = trace.anchor(r.k);
        let e_norm = r.gradient_error_norm();
        sum_s += s[j];
        sum_s2 += s[j] * s[j];
        sum_e += e_norm;
        sum_e2 += e_norm * e_norm;
        sum_p += r.eps;
        sum_p2 += r.eps * r.eps;
        b_max = b_max.max(r.regularizer_lipschitz);
        if regime == Regime::Bounded && domain.on_boundary(&r.y, BOUNDARY_TOLERANCE) {
            let pull = bregman::divergence_gradient(gen, &r.y, anchor).map_err(ProxError::from)?;
            let q = r.regularizer_lipschitz + (r.noisy_gradient() + pull / lam).norm();
            q_max = q_max.max(q);
        }
        let over = (0.5 * r.smoothness - 0.5 * sigma / lam).max(0.0);
        if over > 0.0 {
            excess += over * (&r.x - anchor).norm_squared();
        }
        let d = 2.0 * b_max + q_max;

        ledger.distances.push((&r.x - optima[j]).norm());
        ledger.e_norms.push(e_norm);
        ledger.eps.push(r.eps);
        ledger.sigma.push(sum_s);
        ledger.sigma_bar.push(sum_s2);
        ledger.e.push(sum_e);
        ledger.e_bar.push(sum_e2);
        ledger.p.push(sum_p);
        ledger.p_bar.push(sum_p2);
        ledger.b.push(b_max);
        ledger.d.push(d);
        ledger.step_excess.push(excess);
        ledger.s_seq.push(
            2.0 * lam / sigma * ledger.z0
                + 2.0 * lam * d / sigma * sum_p
                + (2.0 * g / sigma - 1.0) * sum_s2
                + 2.0 * lam / sigma * excess,
        );
        ledger.tau_seq.push(
            2.0 * lam / sigma * e_norm + 2.0 * g / sigma * s[j + 1] + 2.0 * g / sigma * r.eps,
        );
    }
    Ok(ledger)
}

/// Bound on `u_i` for a nonnegative sequence with
/// `u_i² ≤ S_i + Σ_{k≤i} τ_k u_k`:
/// `½Σ_{k≤i} τ_k + (S_i + (½Σ_{k≤i} τ_k)²)^{1/2}` (`i` is 1-based).
///
/// `S` must be nondecreasing and `τ` nonnegative on `1..=i`.
pub fn recursion_bound(s_seq: &[f64], tau_seq: &[f64], i: usize) -> Result<f64, RegretError> {
    if i == 0 || i > s_seq.len() || i > tau_seq.len() {
        return Err(RegretError::Precondition(format!(
            "index {i} outside 1..={}",
            s_seq.len().min(tau_seq.len())
        )));
    }
    if s_seq[0] < 0.0 || s_seq[..i].windows(2).any(|w| w[1] < w[0]) {
        return Err(RegretError::Precondition(
            "S must be nonnegative and nondecreasing".into(),
        ));
    }
    if tau_seq[..i].iter().any(|t| !(*t >= 0.0)) {
        return Err(RegretError::Precondition("τ must be nonnegative".into()));
    }
    let half: f64 = 0.5 * tau_seq[..i].iter().sum::<f64>();
    Ok(half + (s_seq[i - 1] + half * half).sqrt())
}

/// Right-hand side of the regret bound at every horizon `T' ≤ T`, evaluated
/// with `s_{T'+1} = 0`.
///
/// Bounded `Ω` with diameter `R`:
/// ```text
/// V(x_0*, x_0)/λ + R G s_1/λ + D P + (G − σ/2) Σ̄ / λ + R Σ_k w_k + C
/// ```
/// Whole space:
/// ```text
/// Z_0 + D P + (G − σ/2) Σ̄ / λ + C + (Σ_k τ_k + √S) Σ_k w_k
/// ```
/// with `w_k = ‖e_k‖ + G s_{k+1}/λ + G ε_k/λ` and `C` the accumulated step
/// excess.
pub fn theorem_rhs(ledger: &BoundLedger, regime: Regime) -> Result<Vec<f64>, RegretError> {
    if regime != ledger.regime {
        return Err(RegretError::RegimeMismatch {
            requested: regime,
            ledger: ledger.regime,
        });
    }
    let lam = ledger.step_size;
    let sigma = ledger.sigma_omega;
    let g = ledger.g_omega;
    let radius = match regime {
        Regime::Bounded => ledger
            .diameter
            .ok_or_else(|| RegretError::Precondition("bounded regime needs a diameter".into()))?,
        Regime::WholeSpace => 0.0,
    };
    let mut out = Vec::with_capacity(ledger.horizon());
    let mut w_sum = 0.0;
    let mut tau_sum = 0.0;
    for j in 0..ledger.horizon() {
        let next_s = ledger.s[j + 1];
        w_sum += ledger.e_norms[j] + g * next_s / lam + g * ledger.eps[j] / lam;
        tau_sum += ledger.tau_seq[j];
        let w_prefix = w_sum - g * next_s / lam;
        let common = ledger.d[j] * ledger.p[j]
            + (g - 0.5 * sigma) * ledger.sigma_bar[j] / lam
            + ledger.step_excess[j];
        let rhs = match regime {
            Regime::Bounded => {
                ledger.initial_divergence / lam
                    + radius * g * ledger.s[0] / lam
                    + common
                    + radius * w_prefix
            }
            Regime::WholeSpace => {
                let tau_prefix = tau_sum - 2.0 * g / sigma * next_s;
                ledger.z0 + common + (tau_prefix + ledger.s_seq[j].sqrt()) * w_prefix
            }
        };
        out.push(rhs);
    }
    Ok(out)
}

/// Outcome of comparing `R_{T'}` with `RHS_{T'} + tol·T'` for all `T'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// `min_{T'} (RHS_{T'} − R_{T'})`.
    pub worst_margin: f64,
    /// Horizon of the worst margin.
    pub worst_horizon: usize,
    /// First horizon where the inequality fails.
    pub first_violation: Option<usize>,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

pub fn certify(regret: &[f64], rhs: &[f64], tol_per_round: f64) -> Certificate {
    let mut worst_margin = f64::INFINITY;
    let mut worst_horizon = 0;
    let mut first_violation = None;
    for (j, (r, b)) in regret.iter().zip(rhs).enumerate() {
        let margin = b - r;
        if margin < worst_margin {
            worst_margin = margin;
            worst_horizon = j + 1;
        }
        if first_violation.is_none() && !(*r <= b + tol_per_round * (j + 1) as f64) {
            first_violation = Some(j + 1);
        }
    }
    Certificate {
        worst_margin,
        worst_horizon,
        first_violation,
    }
}

pub const LEDGER_HEADER: [&str; 8] = [
    "T",
    "R_T",
    "RHS_T",
    "Sigma_T",
    "SigmaBar_T",
    "E_T",
    "P_T",
    "margin",
];

pub fn write_ledger_csv<W: Write>(
    ledger: &BoundLedger,
    regret: &[f64],
    rhs: &[f64],
    out: W,
) -> Result<(), TraceIoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEDGER_HEADER)?;
    for j in 0..ledger.horizon().min(regret.len()).min(rhs.len()) {
        w.write_record([
            (j + 1).to_string(),
            fmt_f64(regret[j]),
            fmt_f64(rhs[j]),
            fmt_f64(ledger.sigma[j]),
            fmt_f64(ledger.sigma_bar[j]),
            fmt_f64(ledger.e[j]),
            fmt_f64(ledger.p[j]),
            fmt_f64(rhs[j] - regret[j]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
