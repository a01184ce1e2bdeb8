//! Proximal rules and the mirror subproblem
//!
//! ```text
//! Φ(x) = h_k(x) + <∇g_k(x_{k-1}) + e_k, x> + V_ω(x, x_{k-1}) / λ,   x ∈ Ω
//! ```
//!
//! solved exactly ([`exact_mirror_prox`]) or up to a distance `ε_k`
//! ([`inexact_mirror_prox`]).
//!
//! Constraints are handled by projecting after the prox of `h_k`. That is only
//! exact for some pairs of regularizer and domain; see
//! [`ProxRule::composes_with`]. Other pairs are refused.

use nalgebra::{DMatrix, DVector, SVD};
use thiserror::Error;

use crate::bregman::{self, BregmanError, DistanceGenerator};
use crate::losses::{split_blocks, stack_blocks, CompositeLossStep, Domain, ErrorModel};

/// Default optimality residual of the inner solver.
pub const INNER_TOLERANCE: f64 = 1e-9;
/// Default iteration cap of the inner solver.
pub const INNER_MAX_ITERATIONS: usize = 10_000;
/// Largest residual, as a multiple of the tolerance, accepted from an inner
/// solve that ran out of iterations.
pub const EXHAUSTED_ACCEPT_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProxError {
    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    SvdFailure { rows: usize, cols: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("prox of {rule} followed by projection onto {domain} is not the constrained prox")]
    NonCommutingComposition { rule: String, domain: String },
    #[error(
        "step size {step_size} violates λ ≤ 2σ_ω/L (L = {smoothness}, σ_ω = {sigma_omega}, bound = {bound})"
    )]
    StepSizeRule {
        step_size: f64,
        smoothness: f64,
        sigma_omega: f64,
        bound: f64,
    },
    #[error("inner solver stopped after {iterations} iterations with residual {residual:e}")]
    InnerSolverExhausted { iterations: usize, residual: f64 },
    #[error(transparent)]
    Bregman(#[from] BregmanError),
}

/// `sign(v) · max(|v| − lam, 0)`.
pub fn soft_threshold_scalar(v: f64, lam: f64) -> f64 {
    if v > lam {
        v - lam
    } else if v < -lam {
        v + lam
    } else {
        0.0
    }
}

/// Entrywise soft thresholding, the prox of `lam ‖·‖₁`.
pub fn soft_threshold(y: &DVector<f64>, lam: f64) -> DVector<f64> {
    y.map(|v| soft_threshold_scalar(v, lam))
}

pub fn soft_threshold_matrix(y: &DMatrix<f64>, lam: f64) -> DMatrix<f64> {
    y.map(|v| soft_threshold_scalar(v, lam))
}

/// Thin SVD `M = U diag(σ) Vᵀ` with `σ` sorted in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvdFactors {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

/// Any routine that provides a thin SVD.
pub trait ThinSvd {
    fn thin_svd(&self, m: &DMatrix<f64>) -> Result<ThinSvdFactors, ProxError>;
}

/// One-sided Jacobi-free Golub–Kahan SVD from `nalgebra`.
///
/// Signs are normalized so the first nonzero entry of every left singular
/// vector is nonnegative.
#[derive(Debug, Clone, Copy)]
pub struct NalgebraSvd {
    pub eps: f64,
    pub max_iterations: usize,
}

impl Default for NalgebraSvd {
    fn default() -> Self {
        Self {
            eps: f64::EPSILON,
            max_iterations: 0,
        }
    }
}

impl ThinSvd for NalgebraSvd {
    fn thin_svd(&self, m: &DMatrix<f64>) -> Result<ThinSvdFactors, ProxError> {
        let (rows, cols) = m.shape();
        let fail = ProxError::SvdFailure { rows, cols };
        if m.iter().any(|v| !v.is_finite()) {
            return Err(fail);
        }
        let svd = SVD::try_new(m.clone(), true, true, self.eps, self.max_iterations)
            .ok_or(fail.clone())?;
        let (mut u, mut v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(fail),
        };
        for j in 0..u.ncols() {
            let first = u
                .column(j)
                .iter()
                .cloned()
                .find(|v| *v != 0.0)
                .unwrap_or(0.0);
            if first < 0.0 {
                u.column_mut(j).neg_mut();
                v_t.row_mut(j).neg_mut();
            }
        }
        Ok(ThinSvdFactors {
            u,
            singular_values: svd.singular_values,
            v_t,
        })
    }
}

/// `U · max(Σ − lam, 0) · Vᵀ`, the prox of `lam ‖·‖_*`.
pub fn singular_value_threshold<S: ThinSvd + ?Sized>(
    z: &DMatrix<f64>,
    lam: f64,
    svd: &S,
) -> Result<DMatrix<f64>, ProxError> {
    if !(lam >= 0.0) {
        return Err(ProxError::InvalidParameter(format!(
            "threshold {lam} must be nonnegative"
        )));
    }
    let f = svd.thin_svd(z)?;
    let shrunk = f.singular_values.map(|s| (s - lam).max(0.0));
    let k = shrunk.iter().take_while(|s| **s > 0.0).count();
    if k == 0 {
        return Ok(DMatrix::zeros(z.nrows(), z.ncols()));
    }
    let u = f.u.columns(0, k);
    let vt = f.v_t.rows(0, k);
    Ok(u * DMatrix::from_diagonal(&shrunk.rows(0, k).into_owned()) * vt)
}

/// The regularizer `h_k` together with its exact Euclidean prox.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxRule {
    Zero,
    /// `weight ‖x‖₁`.
    L1 {
        weight: f64,
    },
    /// `weight ‖mat(x)‖_*` with `x` the column-major vectorization.
    NuclearNorm {
        rows: usize,
        cols: usize,
        weight: f64,
    },
    /// `nuclear_weight ‖L‖_* + l1_weight ‖vec(S)‖₁` on `[vec(L); vec(S)]`.
    LowRankPlusSparse {
        rows: usize,
        cols: usize,
        nuclear_weight: f64,
        l1_weight: f64,
    },
    /// Indicator of a convex set; its prox is the projection.
    Indicator(Domain),
}

impl ProxRule {
    pub fn name(&self) -> &'static str {
        match self {
            ProxRule::Zero => "zero",
            ProxRule::L1 { .. } => "l1",
            ProxRule::NuclearNorm { .. } => "nuclear",
            ProxRule::LowRankPlusSparse { .. } => "low_rank_plus_sparse",
            ProxRule::Indicator(_) => "indicator",
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            ProxRule::Zero => 0.0,
            ProxRule::L1 { weight } => weight * x.lp_norm(1),
            ProxRule::NuclearNorm { rows, cols, weight } => {
                weight * nuclear_norm(&DMatrix::from_column_slice(*rows, *cols, x.as_slice()))
            }
            ProxRule::LowRankPlusSparse {
                rows,
                cols,
                nuclear_weight,
                l1_weight,
            } => {
                let (l, s) = split_blocks(x, *rows, *cols);
                nuclear_weight * nuclear_norm(&l) + l1_weight * s.lp_norm(1)
            }
            ProxRule::Indicator(d) => {
                if d.contains(x, 1e-9) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `argmin_u h(u) + ‖u − x‖² / (2 scale)`.
    pub fn apply(&self, x: &DVector<f64>, scale: f64) -> Result<DVector<f64>, ProxError> {
        self.apply_with(x, scale, &NalgebraSvd::default())
    }

    pub fn apply_with<S: ThinSvd + ?Sized>(
        &self,
        x: &DVector<f64>,
        scale: f64,
        svd: &S,
    ) -> Result<DVector<f64>, ProxError> {
        if !(scale >= 0.0) {
            return Err(ProxError::InvalidParameter(format!(
                "prox scale {scale} must be nonnegative"
            )));
        }
        Ok(match self {
            ProxRule::Zero => x.clone(),
            ProxRule::L1 { weight } => soft_threshold(x, scale * weight),
            ProxRule::NuclearNorm { rows, cols, weight } => {
                let z = DMatrix::from_column_slice(*rows, *cols, x.as_slice());
                let out = singular_value_threshold(&z, scale * weight, svd)?;
                DVector::from_column_slice(out.as_slice())
            }
            ProxRule::LowRankPlusSparse {
                rows,
                cols,
                nuclear_weight,
                l1_weight,
            } => {
                let (l, s) = split_blocks(x, *rows, *cols);
                let l = singular_value_threshold(&l, scale * nuclear_weight, svd)?;
                let s = soft_threshold_matrix(&s, scale * l1_weight);
                stack_blocks(&l, &s)
            }
            ProxRule::Indicator(d) => d.project(x),
        })
    }

    /// Lipschitz constant `B` of `h` with respect to the Euclidean norm on
    /// `ℝ^dim`. Zero for an indicator (constant on its domain).
    pub fn lipschitz(&self, dim: usize) -> f64 {
        match self {
            ProxRule::Zero | ProxRule::Indicator(_) => 0.0,
            ProxRule::L1 { weight } => weight * (dim as f64).sqrt(),
            ProxRule::NuclearNorm { rows, cols, weight } => {
                weight * (*rows.min(cols) as f64).sqrt()
            }
            ProxRule::LowRankPlusSparse {
                rows,
                cols,
                nuclear_weight,
                l1_weight,
            } => {
                let bn = nuclear_weight * (*rows.min(cols) as f64).sqrt();
                let bs = l1_weight * ((rows * cols) as f64).sqrt();
                (bn * bn + bs * bs).sqrt()
            }
        }
    }

    /// Some element of `∂h(x)`.
    pub fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ProxRule::Zero | ProxRule::Indicator(_) => DVector::zeros(x.len()),
            ProxRule::L1 { weight } => x.map(|v| weight * sign(v)),
            ProxRule::NuclearNorm { rows, cols, weight } => {
                let m = DMatrix::from_column_slice(*rows, *cols, x.as_slice());
                DVector::from_column_slice(nuclear_subgradient(&m).as_slice()) * *weight
            }
            ProxRule::LowRankPlusSparse {
                rows,
                cols,
                nuclear_weight,
                l1_weight,
            } => {
                let (l, s) = split_blocks(x, *rows, *cols);
                stack_blocks(
                    &(nuclear_subgradient(&l) * *nuclear_weight),
                    &s.map(|v| l1_weight * sign(v)),
                )
            }
        }
    }

    /// Whether `project(prox_h(z))` is the prox of `h + ι_Ω`.
    ///
    /// Exact cases: anything on the whole space, the zero function on any
    /// domain, `ℓ1` with a box (the problem separates into 1-D problems) and
    /// `ℓ1` with a ball centred at the origin (shrinking the soft-threshold
    /// output keeps its sign pattern, so the KKT multiplier is shared).
    pub fn composes_with(&self, domain: &Domain) -> bool {
        match (self, domain) {
            (_, Domain::WholeSpace) => true,
            (ProxRule::Zero, _) => true,
            (ProxRule::L1 { .. }, Domain::Box { .. }) => true,
            (ProxRule::L1 { .. }, Domain::Ball { center, .. }) => center.iter().all(|c| *c == 0.0),
            (ProxRule::Indicator(d), other) => d == other,
            _ => false,
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().sum()
}

fn nuclear_subgradient(m: &DMatrix<f64>) -> DMatrix<f64> {
    match NalgebraSvd::default().thin_svd(m) {
        Ok(f) => {
            let tol = 1e-12 * f.singular_values.iter().cloned().fold(0.0, f64::max);
            let k = f.singular_values.iter().take_while(|s| **s > tol).count();
            if k == 0 {
                DMatrix::zeros(m.nrows(), m.ncols())
            } else {
                f.u.columns(0, k) * f.v_t.rows(0, k)
            }
        }
        Err(_) => DMatrix::zeros(m.nrows(), m.ncols()),
    }
}

/// Prox of `h + ι_Ω` at `z` with step `scale`, refusing pairs that do not
/// compose exactly.
pub fn prox_onto_domain(
    rule: &ProxRule,
    domain: &Domain,
    z: &DVector<f64>,
    scale: f64,
) -> Result<DVector<f64>, ProxError> {
    if !rule.composes_with(domain) {
        return Err(ProxError::NonCommutingComposition {
            rule: rule.name().to_string(),
            domain: domain_name(domain).to_string(),
        });
    }
    let u = rule.apply(z, scale)?;
    Ok(match domain {
        Domain::WholeSpace => u,
        d => d.project(&u),
    })
}

pub(crate) fn domain_name(d: &Domain) -> &'static str {
    match d {
        Domain::WholeSpace => "whole_space",
        Domain::Ball { .. } => "ball",
        Domain::Box { .. } => "box",
        Domain::Simplex { .. } => "simplex",
    }
}

/// One mirror subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a> {
    pub loss: &'a CompositeLossStep,
    pub generator: &'a DistanceGenerator,
    pub anchor: &'a DVector<f64>,
    pub noisy_gradient: &'a DVector<f64>,
    pub step_size: f64,
    pub domain: &'a Domain,
    pub inner_tolerance: f64,
    pub inner_max_iterations: usize,
}

impl<'a> SubproblemSpec<'a> {
    /// Validates the step size; with `enforce_step_rule` the condition
    /// `λ ≤ 2σ_ω / L_k` must hold.
    pub fn new(
        loss: &'a CompositeLossStep,
        generator: &'a DistanceGenerator,
        anchor: &'a DVector<f64>,
        noisy_gradient: &'a DVector<f64>,
        step_size: f64,
        domain: &'a Domain,
        enforce_step_rule: bool,
    ) -> Result<Self, ProxError> {
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(ProxError::InvalidParameter(format!(
                "step size {step_size} must be positive"
            )));
        }
        if anchor.len() != loss.dim() {
            return Err(BregmanError::DimensionMismatch {
                left: anchor.len(),
                right: loss.dim(),
            }
            .into());
        }
        if enforce_step_rule {
            check_step_rule(step_size, loss.smoothness, generator.sigma_omega())?;
        }
        Ok(Self {
            loss,
            generator,
            anchor,
            noisy_gradient,
            step_size,
            domain,
            inner_tolerance: INNER_TOLERANCE,
            inner_max_iterations: INNER_MAX_ITERATIONS,
        })
    }

    /// `Φ(x)`, `+∞` outside the domain.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        if !self.domain.contains(x, 1e-9) {
            return f64::INFINITY;
        }
        let v = bregman::divergence(self.generator, x, self.anchor).unwrap_or(f64::INFINITY);
        self.loss.regularizer_value(x) + self.noisy_gradient.dot(x) + v / self.step_size
    }
}

/// `λ ≤ 2σ_ω / L`.
pub fn check_step_rule(step_size: f64, smoothness: f64, sigma_omega: f64) -> Result<(), ProxError> {
    let bound = 2.0 * sigma_omega / smoothness;
    if step_size > bound {
        return Err(ProxError::StepSizeRule {
            step_size,
            smoothness,
            sigma_omega,
            bound,
        });
    }
    Ok(())
}

/// Solution of one subproblem together with an upper bound on its distance
/// to the exact minimizer (zero for closed forms).
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorStep {
    pub point: DVector<f64>,
    pub distance_bound: f64,
}

/// `y_k = argmin_Ω Φ`.
///
/// Closed forms are used for the Euclidean generator (prox-gradient step),
/// and for the entropy generator when the problem separates per coordinate
/// (zero or `ℓ1` regularizer on the whole space or a box) or reduces to a
/// multiplicative-weights update (zero regularizer on the simplex). Every
/// other case goes through [`inner_mirror_prox`].
pub fn exact_mirror_prox(spec: &SubproblemSpec<'_>) -> Result<MirrorStep, ProxError> {
    let rule = &spec.loss.regularizer;
    if !rule.composes_with(spec.domain) {
        return Err(ProxError::NonCommutingComposition {
            rule: rule.name().to_string(),
            domain: domain_name(spec.domain).to_string(),
        });
    }
    let lam = spec.step_size;
    if spec.generator.is_euclidean() {
        let z = spec.anchor - spec.noisy_gradient * lam;
        let point = prox_onto_domain(rule, spec.domain, &z, lam)?;
        return Ok(MirrorStep {
            point,
            distance_bound: 0.0,
        });
    }
    if let Some(point) = entropy_closed_form(spec) {
        return Ok(MirrorStep {
            point,
            distance_bound: 0.0,
        });
    }
    inner_mirror_prox(spec)
}

/// `argmin_{x ∈ Δ} φ(x) − <θ, x>` for a separable `φ` with increasing `φ'`:
/// `x_i = max(0, (φ')⁻¹(θ_i − ν))` with the multiplier `ν` found by bisection.
fn simplex_mirror_step(gen: &DistanceGenerator, theta: &DVector<f64>) -> DVector<f64> {
    let n = theta.len();
    let top = theta.max();
    let at = |t: f64| gen.derivative(t);
    let point = |nu: f64| {
        gen.gradient_inverse(&theta.add_scalar(-nu))
            .map(|t| t.max(0.0))
    };
    // Sum is ≥ 1 at `lo` (top coordinate equals 1) and ≤ 1 at `hi`.
    let mut lo = top - at(1.0);
    let mut hi = top - at(1.0 / n as f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if point(mid).sum() >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = point(lo);
    let total = x.sum();
    x / total
}

/// Root of the increasing function `f` (unbounded in both directions).
fn increasing_root(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo) > 0.0 {
        lo *= 2.0;
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `argmin_{‖x − c‖ ≤ r} φ(x) − <θ, x> + shrink‖x‖₁` for a separable `φ`.
///
/// For a multiplier `μ ≥ 0` each coordinate minimizes
/// `φ(t) + μ(t − c_i)² − θ_i t + shrink|t|`, a scalar monotone equation;
/// `‖x(μ) − c‖` decreases in `μ`, so `μ` is found by bisection.
fn ball_mirror_step(
    gen: &DistanceGenerator,
    theta: &DVector<f64>,
    shrink: f64,
    c: &DVector<f64>,
    r: f64,
) -> DVector<f64> {
    let dphi = |t: f64| gen.derivative(t);
    let point = |mu: f64| {
        DVector::from_fn(theta.len(), |i, _| {
            let slope = |t: f64| dphi(t) + 2.0 * mu * (t - c[i]);
            let at_zero = slope(0.0);
            if theta[i] - shrink > at_zero {
                increasing_root(|t| slope(t) - (theta[i] - shrink))
            } else if theta[i] + shrink < at_zero {
                increasing_root(|t| slope(t) - (theta[i] + shrink))
            } else {
                0.0
            }
        })
    };
    let free = point(0.0);
    if (&free - c).norm() <= r {
        return free;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while (&point(hi) - c).norm() > r {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (&point(mid) - c).norm() > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = point(hi);
    let d = (&x - c).norm();
    if d > r {
        c + (x - c) * (r / d)
    } else {
        x
    }
}

fn entropy_closed_form(spec: &SubproblemSpec<'_>) -> Option<DVector<f64>> {
    let gen = spec.generator;
    gen.entropy_bounds()?;
    let lam = spec.step_size;
    let theta = gen.gradient(spec.anchor) - spec.noisy_gradient * lam;
    let weight = match (&spec.loss.regularizer, spec.domain) {
        (ProxRule::Zero, Domain::Simplex { .. }) => return Some(simplex_mirror_step(gen, &theta)),
        (ProxRule::Zero, Domain::WholeSpace | Domain::Box { .. } | Domain::Ball { .. }) => 0.0,
        (
            ProxRule::L1 { weight },
            Domain::WholeSpace | Domain::Box { .. } | Domain::Ball { .. },
        ) => *weight,
        _ => return None,
    };
    if let Domain::Ball { center, radius } = spec.domain {
        return Some(ball_mirror_step(gen, &theta, lam * weight, center, *radius));
    }
    // Per coordinate: ∇φ(x) = θ − λ η s with s ∈ ∂|x|; ∇φ is increasing.
    let at_zero = gen.derivative(0.0);
    let shrink = lam * weight;
    let target = theta.map(|s| {
        if s - shrink > at_zero {
            s - shrink
        } else if s + shrink < at_zero {
            s + shrink
        } else {
            at_zero
        }
    });
    let mut point = gen.gradient_inverse(&target);
    for (p, t) in point.iter_mut().zip(target.iter()) {
        if *t == at_zero {
            *p = 0.0;
        }
    }
    Some(match spec.domain {
        Domain::Box { .. } => spec.domain.project(&point),
        _ => point,
    })
}

/// Accelerated proximal gradient on `Φ`, treating
/// `s(x) = <v, x> + V_ω(x, anchor)/λ` as the smooth part and `h + ι_Ω` as the
/// prox part, with backtracking and gradient-based restarts.
///
/// At a trial point `x⁺ = prox_t(w − t∇s(w))` the vector
/// `r = (w − x⁺)/t + ∇s(x⁺) − ∇s(w)` lies in `∂Φ(x⁺)`. The solver stops when
/// `‖r‖ ≤ inner_tolerance`; since `Φ` is `σ_ω/λ`-strongly convex,
/// `‖x⁺ − y_k‖ ≤ λ‖r‖/σ_ω`, which is returned as the distance bound.
pub fn inner_mirror_prox(spec: &SubproblemSpec<'_>) -> Result<MirrorStep, ProxError> {
    let gen = spec.generator;
    let lam = spec.step_size;
    let rule = &spec.loss.regularizer;
    let mu = gen.sigma_omega() / lam;
    let grad_anchor = gen.gradient(spec.anchor);
    let smooth_grad = |x: &DVector<f64>| -> DVector<f64> {
        spec.noisy_gradient + (gen.gradient(x) - &grad_anchor) / lam
    };

    let mut x = prox_onto_domain(rule, spec.domain, spec.anchor, 0.0)?;
    let mut w = x.clone();
    let mut theta = 1.0_f64;
    let mut t = lam / gen.sigma_omega();
    let mut residual = f64::INFINITY;
    let mut best: Option<(f64, DVector<f64>)> = None;

    for _ in 0..spec.inner_max_iterations {
        let gw = smooth_grad(&w);
        t *= 2.0;
        // Accept `t` once it matches the local Lipschitz constant of `∇s`;
        // this avoids the cancellation of a function-value test.
        let (next, g_next) = loop {
            let cand = prox_onto_domain(rule, spec.domain, &(&w - &gw * t), t)?;
            let gc = smooth_grad(&cand);
            if t * (&gc - &gw).norm() <= (&cand - &w).norm() || t < 1e-300 {
                break (cand, gc);
            }
            t *= 0.5;
        };
        let r = (&w - &next) / t + &g_next - &gw;
        residual = r.norm();
        if residual <= spec.inner_tolerance {
            return Ok(MirrorStep {
                point: next,
                distance_bound: residual / mu,
            });
        }
        if best.as_ref().is_none_or(|(r, _)| residual < *r) {
            best = Some((residual, next.clone()));
        }
        if (&w - &next).dot(&(&next - &x)) > 0.0 {
            theta = 1.0;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        w = &next + (&next - &x) * ((theta - 1.0) / theta_next);
        theta = theta_next;
        x = next;
    }
    // Every iterate carries a valid distance bound, so a near miss is still
    // usable: its bound is folded into ε_k by the caller.
    match best {
        Some((r, point)) if r <= EXHAUSTED_ACCEPT_FACTOR * spec.inner_tolerance => Ok(MirrorStep {
            point,
            distance_bound: r / mu,
        }),
        _ => Err(ProxError::InnerSolverExhausted {
            iterations: spec.inner_max_iterations,
            residual: best.map_or(residual, |(r, _)| r),
        }),
    }
}

/// Played point `x_k`, exact solution `y_k`, and the bound `ε_k` with
/// `‖x_k − y_k‖ ≤ ε_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct InexactStep {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub eps: f64,
}

/// `y_k` from [`exact_mirror_prox`], perturbed by the model's prox offset and
/// projected back onto `Ω`.
///
/// The reported `ε_k` is the injected radius plus the inner solver's distance
/// bound, raised to the realized `‖x_k − y_k‖` if rounding ever puts it above.
pub fn inexact_mirror_prox(
    spec: &SubproblemSpec<'_>,
    model: &ErrorModel,
    k: usize,
) -> Result<InexactStep, ProxError> {
    let exact = exact_mirror_prox(spec)?;
    let (offset, injected) = model.prox_error(k, exact.point.len());
    let x = if injected == 0.0 {
        exact.point.clone()
    } else {
        spec.domain.project(&(&exact.point + offset))
    };
    let realized = (&x - &exact.point).norm();
    let eps = (injected + exact.distance_bound).max(realized);
    Ok(InexactStep {
        x,
        y: exact.point,
        eps,
    })
}
