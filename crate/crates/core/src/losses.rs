//! Time-varying composite losses `f_k = g_k + h_k`, feasible domains, and the
//! error model that perturbs the gradient and the proximal step.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::prox::ProxRule;
use crate::rng::{self, SubSeed};

/// Smooth part `g_k` of a composite loss.
pub trait SmoothLoss: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// `‖A x − b‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub design: DMatrix<f64>,
    pub target: DVector<f64>,
}

impl LeastSquares {
    pub fn new(design: DMatrix<f64>, target: DVector<f64>) -> Self {
        assert_eq!(design.nrows(), target.len(), "design/target row mismatch");
        Self { design, target }
    }

    /// `2 λ_max(AᵀA)`, the exact gradient Lipschitz constant.
    pub fn smoothness(&self) -> f64 {
        // The Gram matrix on the smaller side has the same nonzero spectrum.
        let a = &self.design;
        let gram = if a.nrows() <= a.ncols() {
            a * a.transpose()
        } else {
            a.transpose() * a
        };
        let top = gram
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max);
        2.0 * top
    }
}

impl SmoothLoss for LeastSquares {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (&self.design * x - &self.target).norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = &self.design * x - &self.target;
        self.design.tr_mul(&r) * 2.0
    }
}

/// `(c/2) ‖x − center‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub center: DVector<f64>,
    pub curvature: f64,
}

impl SmoothLoss for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.curvature * (x - &self.center).norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.center) * self.curvature
    }
}

/// `<c, x>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub coeffs: DVector<f64>,
}

impl SmoothLoss for Linear {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.coeffs.dot(x)
    }

    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.coeffs.clone()
    }
}

/// `‖M − L − S‖²_F + μ_L ‖L‖²_F + μ_S ‖S‖²_F` over the stacked variable
/// `[vec(L); vec(S)]` (column-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationFit {
    pub observed: DMatrix<f64>,
    pub mu_low_rank: f64,
    pub mu_sparse: f64,
}

impl SeparationFit {
    pub fn block_len(&self) -> usize {
        self.observed.len()
    }

    /// Splits a stacked variable into its `(L, S)` matrices.
    pub fn split(&self, x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        split_blocks(x, self.observed.nrows(), self.observed.ncols())
    }

    /// Largest eigenvalue of the Hessian `2 [[(1+μ_L) I, I], [I, (1+μ_S) I]]`.
    pub fn smoothness(&self) -> f64 {
        let a = 1.0 + self.mu_low_rank;
        let b = 1.0 + self.mu_sparse;
        let mid = 0.5 * (a + b);
        let half_gap = 0.5 * (a - b);
        2.0 * (mid + (half_gap * half_gap + 1.0).sqrt())
    }
}

/// `[vec(L); vec(S)]` → `(L, S)`.
pub fn split_blocks(x: &DVector<f64>, rows: usize, cols: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = rows * cols;
    assert_eq!(x.len(), 2 * n, "stacked variable has wrong length");
    let l = DMatrix::from_column_slice(rows, cols, &x.as_slice()[..n]);
    let s = DMatrix::from_column_slice(rows, cols, &x.as_slice()[n..]);
    (l, s)
}

/// `(L, S)` → `[vec(L); vec(S)]`.
pub fn stack_blocks(l: &DMatrix<f64>, s: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(l.len() + s.len(), l.iter().chain(s.iter()).cloned())
}

impl SmoothLoss for SeparationFit {
    fn dim(&self) -> usize {
        2 * self.block_len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let (l, s) = self.split(x);
        (&self.observed - &l - &s).norm_squared()
            + self.mu_low_rank * l.norm_squared()
            + self.mu_sparse * s.norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (l, s) = self.split(x);
        let r = (&l + &s - &self.observed) * 2.0;
        let gl = &r + &l * (2.0 * self.mu_low_rank);
        let gs = &r + &s * (2.0 * self.mu_sparse);
        stack_blocks(&gl, &gs)
    }
}

/// One round `(g_k, h_k)` with its declared constants `L_k` and `B_k`.
#[derive(Debug, Clone)]
pub struct CompositeLossStep {
    pub smooth: Arc<dyn SmoothLoss>,
    pub regularizer: ProxRule,
    pub smoothness: f64,
    pub regularizer_lipschitz: f64,
}

impl CompositeLossStep {
    /// Builds a step, taking `B_k` from the regularizer.
    pub fn new(smooth: Arc<dyn SmoothLoss>, regularizer: ProxRule, smoothness: f64) -> Self {
        let b = regularizer.lipschitz(smooth.dim());
        Self {
            smooth,
            regularizer,
            smoothness,
            regularizer_lipschitz: b,
        }
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn smooth_value(&self, x: &DVector<f64>) -> f64 {
        self.smooth.value(x)
    }

    pub fn smooth_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.smooth.gradient(x)
    }

    pub fn regularizer_value(&self, x: &DVector<f64>) -> f64 {
        self.regularizer.value(x)
    }

    /// `f_k(x) = g_k(x) + h_k(x)`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.smooth_value(x) + self.regularizer_value(x)
    }
}

/// Feasible set `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    WholeSpace,
    Ball {
        center: DVector<f64>,
        radius: f64,
    },
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// Probability simplex in `ℝ^dim`.
    Simplex {
        dim: usize,
    },
}

impl Domain {
    /// Ball of diameter `diameter` centred at the origin.
    pub fn ball_with_diameter(dim: usize, diameter: f64) -> Self {
        Domain::Ball {
            center: DVector::zeros(dim),
            radius: 0.5 * diameter,
        }
    }

    /// Cube `[-c, c]^dim` whose Euclidean diameter is `diameter`.
    pub fn cube_with_diameter(dim: usize, diameter: f64) -> Self {
        let c = 0.5 * diameter / (dim as f64).sqrt();
        Domain::Box {
            lower: DVector::from_element(dim, -c),
            upper: DVector::from_element(dim, c),
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Domain::WholeSpace)
    }

    /// Diameter `R`, `None` for the whole space.
    pub fn diameter(&self) -> Option<f64> {
        match self {
            Domain::WholeSpace => None,
            Domain::Ball { radius, .. } => Some(2.0 * radius),
            Domain::Box { lower, upper } => Some((upper - lower).norm()),
            Domain::Simplex { .. } => Some(std::f64::consts::SQRT_2),
        }
    }

    /// Euclidean projection onto `Ω`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Domain::WholeSpace => x.clone(),
            Domain::Ball { center, radius } => {
                let d = x - center;
                let n = d.norm();
                if n <= *radius {
                    x.clone()
                } else {
                    center + d * (radius / n)
                }
            }
            Domain::Box { lower, upper } => {
                DVector::from_fn(x.len(), |i, _| x[i].clamp(lower[i], upper[i]))
            }
            Domain::Simplex { .. } => project_simplex(x),
        }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self {
            Domain::WholeSpace => true,
            Domain::Ball { center, radius } => (x - center).norm() <= radius + tol,
            Domain::Box { lower, upper } => x
                .iter()
                .enumerate()
                .all(|(i, v)| *v >= lower[i] - tol && *v <= upper[i] + tol),
            Domain::Simplex { .. } => {
                x.iter().all(|v| *v >= -tol)
                    && (x.sum() - 1.0).abs() <= tol * (x.len() as f64).max(1.0)
            }
        }
    }

    /// Whether the normal cone at `x` may be nontrivial (within `tol` of an
    /// active constraint). The simplex always has its affine constraint.
    pub fn on_boundary(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self {
            Domain::WholeSpace => false,
            Domain::Ball { center, radius } => (x - center).norm() >= radius - tol,
            Domain::Box { lower, upper } => x
                .iter()
                .enumerate()
                .any(|(i, v)| *v <= lower[i] + tol || *v >= upper[i] - tol),
            Domain::Simplex { .. } => true,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Domain::WholeSpace => None,
            Domain::Ball { center, .. } => Some(center.len()),
            Domain::Box { lower, .. } => Some(lower.len()),
            Domain::Simplex { dim } => Some(*dim),
        }
    }
}

fn project_simplex(x: &DVector<f64>) -> DVector<f64> {
    let mut sorted: Vec<f64> = x.iter().cloned().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (i as f64 + 1.0);
        if *v - t > 0.0 {
            theta = t;
        }
    }
    x.map(|v| (v - theta).max(0.0))
}

/// Realized error sequences `e_k` and `ε_k`, keyed by `(seed, k)`.
///
/// `e_k` has i.i.d. `N(0, gradient_std²)` coordinates. The prox offset has a
/// uniformly random direction and radius `ε_k = min(prox_std·|z_k|, prox_cap)`
/// with `z_k ~ N(0, 1)`, so `ε_k` is itself the Gaussian magnitude, clipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel {
    pub seed: u64,
    pub gradient_std: f64,
    pub prox_std: f64,
    pub prox_cap: f64,
}

impl ErrorModel {
    pub fn zero() -> Self {
        Self {
            seed: 0,
            gradient_std: 0.0,
            prox_std: 0.0,
            prox_cap: 0.0,
        }
    }

    pub fn gaussian(seed: u64, std: f64, prox_cap: f64) -> Self {
        Self {
            seed,
            gradient_std: std,
            prox_std: std,
            prox_cap,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.gradient_std == 0.0 && (self.prox_std == 0.0 || self.prox_cap == 0.0)
    }

    pub fn gradient_error(&self, k: usize, dim: usize) -> DVector<f64> {
        if self.gradient_std == 0.0 {
            return DVector::zeros(dim);
        }
        let mut r = rng::round_rng(SubSeed::GradientError.derive(self.seed), k);
        rng::gaussian_vector(&mut r, dim) * self.gradient_std
    }

    /// Offset vector and its bound `ε_k`; `‖offset‖ ≤ ε_k` always.
    pub fn prox_error(&self, k: usize, dim: usize) -> (DVector<f64>, f64) {
        if self.prox_std == 0.0 || self.prox_cap == 0.0 || dim == 0 {
            return (DVector::zeros(dim), 0.0);
        }
        let mut r = rng::round_rng(SubSeed::ProxError.derive(self.seed), k);
        let radius = (self.prox_std * rng::gaussian(&mut r).abs()).min(self.prox_cap);
        let dir = rng::gaussian_vector(&mut r, dim);
        let norm = dir.norm();
        if radius == 0.0 || norm == 0.0 {
            return (DVector::zeros(dim), radius);
        }
        let mut offset = dir * (radius / norm);
        while offset.norm() > radius {
            offset *= 1.0 - 1e-15;
        }
        (offset, radius)
    }
}

/// `∇g_k(x) + e_k` together with the realized `e_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyGradient {
    pub value: DVector<f64>,
    pub error: DVector<f64>,
}

pub fn noisy_gradient(
    step: &CompositeLossStep,
    model: &ErrorModel,
    k: usize,
    x: &DVector<f64>,
) -> NoisyGradient {
    let error = model.gradient_error(k, x.len());
    let value = step.smooth_gradient(x) + &error;
    NoisyGradient { value, error }
}

/// A finite horizon of composite losses over one domain.
#[derive(Debug, Clone)]
pub struct ProblemStream {
    steps: Vec<CompositeLossStep>,
    domain: Domain,
}

impl ProblemStream {
    pub fn new(steps: Vec<CompositeLossStep>, domain: Domain) -> Self {
        assert!(!steps.is_empty(), "a stream needs at least one step");
        let n = steps[0].dim();
        assert!(
            steps.iter().all(|s| s.dim() == n),
            "steps disagree on dimension"
        );
        if let Some(d) = domain.dim() {
            assert_eq!(d, n, "domain dimension does not match the losses");
        }
        Self { steps, domain }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn dim(&self) -> usize {
        self.steps[0].dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Step `k`, one-based.
    pub fn step_at(&self, k: usize) -> Option<&CompositeLossStep> {
        k.checked_sub(1).and_then(|i| self.steps.get(i))
    }

    pub fn steps(&self) -> &[CompositeLossStep] {
        &self.steps
    }

    /// `L = max_k L_k`.
    pub fn max_smoothness(&self) -> f64 {
        self.steps.iter().map(|s| s.smoothness).fold(0.0, f64::max)
    }

    /// `B = max_k B_k`.
    pub fn max_regularizer_lipschitz(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.regularizer_lipschitz)
            .fold(0.0, f64::max)
    }

    /// Same losses on a different domain.
    pub fn with_domain(&self, domain: Domain) -> Self {
        Self::new(self.steps.clone(), domain)
    }

    /// The first `horizon` steps.
    pub fn truncated(&self, horizon: usize) -> Self {
        Self::new(
            self.steps[..horizon.min(self.steps.len())].to_vec(),
            self.domain.clone(),
        )
    }
}

/// Worst sampled margins for the declared constants of one step.
/// Each margin is `observed − allowed`; nonpositive means pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantReport {
    pub descent_lemma: f64,
    pub regularizer_lipschitz: f64,
    pub smooth_convexity: f64,
    pub regularizer_convexity: f64,
}

impl ConstantReport {
    pub fn passed(&self) -> bool {
        self.descent_lemma <= 0.0
            && self.regularizer_lipschitz <= 0.0
            && self.smooth_convexity <= 0.0
            && self.regularizer_convexity <= 0.0
    }

    pub fn worst(&self) -> f64 {
        self.descent_lemma
            .max(self.regularizer_lipschitz)
            .max(self.smooth_convexity)
            .max(self.regularizer_convexity)
    }
}

const CURVATURE_PROBES: usize = 20;

/// Samples `samples` pairs around the origin with coordinate spread `spread`
/// and checks the descent lemma for `L_k`, the Lipschitz bound `B_k`, and
/// midpoint convexity of both parts.
///
/// Random pairs rarely align with the top curvature direction in high
/// dimension, so half the pairs use a direction refined by power iteration on
/// gradient differences, and the Lipschitz probe also steps along a
/// subgradient of `h_k`.
pub fn validate_constants<R: Rng + ?Sized>(
    step: &CompositeLossStep,
    samples: usize,
    spread: f64,
    rng: &mut R,
) -> ConstantReport {
    assert!(samples >= 1, "need at least one sample");
    let n = step.dim();
    let mut rep = ConstantReport {
        descent_lemma: f64::NEG_INFINITY,
        regularizer_lipschitz: f64::NEG_INFINITY,
        smooth_convexity: f64::NEG_INFINITY,
        regularizer_convexity: f64::NEG_INFINITY,
    };
    for i in 0..samples {
        let x = rng::gaussian_vector(rng, n) * spread;
        let mut d = rng::gaussian_vector(rng, n);
        if i % 2 == 1 {
            d = top_curvature_direction(step, &x, d, spread);
        }
        let d = d.normalize() * (spread * rng.random_range(0.1..1.0));
        let y = &x + &d;

        let gx = step.smooth_value(&x);
        let gy = step.smooth_value(&y);
        let slack = 1e-10 * (1.0 + gx.abs() + gy.abs());
        let upper =
            gx + step.smooth_gradient(&x).dot(&d) + 0.5 * step.smoothness * d.norm_squared();
        rep.descent_lemma = rep.descent_lemma.max(gy - upper - slack);

        let mid = (&x + &y) * 0.5;
        let gm = step.smooth_value(&mid);
        rep.smooth_convexity = rep.smooth_convexity.max(gm - 0.5 * (gx + gy) - slack);

        let hx = step.regularizer_value(&x);
        let sub = step.regularizer.subgradient(&x);
        let probe = if sub.norm() > 0.0 && i % 2 == 1 {
            &x + sub.normalize() * d.norm()
        } else {
            y.clone()
        };
        for z in [&y, &probe] {
            let hz = step.regularizer_value(z);
            let hslack = 1e-10 * (1.0 + hx.abs() + hz.abs());
            let lip = (hx - hz).abs() - step.regularizer_lipschitz * (&x - z).norm() - hslack;
            rep.regularizer_lipschitz = rep.regularizer_lipschitz.max(lip);
        }
        let hy = step.regularizer_value(&y);
        let hm = step.regularizer_value(&mid);
        let hslack = 1e-10 * (1.0 + hx.abs() + hy.abs());
        rep.regularizer_convexity = rep.regularizer_convexity.max(hm - 0.5 * (hx + hy) - hslack);
    }
    rep
}

fn top_curvature_direction(
    step: &CompositeLossStep,
    x: &DVector<f64>,
    mut d: DVector<f64>,
    spread: f64,
) -> DVector<f64> {
    let gx = step.smooth_gradient(x);
    let h = 1e-3 * spread.max(1e-6);
    for _ in 0..CURVATURE_PROBES {
        let n = d.norm();
        if n == 0.0 {
            break;
        }
        let next = (step.smooth_gradient(&(x + &d * (h / n))) - &gx) / h;
        if next.norm() == 0.0 {
            break;
        }
        d = next;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lasso_step(seed: u64, eta: f64) -> (CompositeLossStep, LeastSquares) {
        let mut r = rng::stream_rng(seed);
        let a = rng::gaussian_matrix(&mut r, 4, 6);
        let b = rng::gaussian_vector(&mut r, 4);
        let ls = LeastSquares::new(a, b);
        let l = ls.smoothness();
        (
            CompositeLossStep::new(Arc::new(ls.clone()), ProxRule::L1 { weight: eta }, l),
            ls,
        )
    }

    // Power iteration on AᵀA, independent of the eigen solver.
    fn power_iteration_top(a: &DMatrix<f64>) -> f64 {
        let g = a.transpose() * a;
        let mut v = DVector::from_element(g.ncols(), 1.0);
        let mut lam = 0.0;
        for _ in 0..5000 {
            let w = &g * &v;
            lam = w.norm();
            v = w / lam;
        }
        lam
    }

    #[test]
    fn least_squares_smoothness_matches_power_iteration() {
        let (_, ls) = lasso_step(3, 0.0);
        let oracle = 2.0 * power_iteration_top(&ls.design);
        assert!((ls.smoothness() - oracle).abs() < 1e-9 * oracle);
    }

    #[test]
    fn validate_passes_with_true_constants() {
        let (step, _) = lasso_step(5, 0.3);
        assert_eq!(step.regularizer_lipschitz, 0.3 * 6f64.sqrt());
        let rep = validate_constants(&step, 200, 2.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn validate_flags_halved_smoothness() {
        let (mut step, _) = lasso_step(5, 0.3);
        step.smoothness *= 0.5;
        let rep = validate_constants(&step, 50, 2.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(rep.descent_lemma > 0.0, "{rep:?}");
    }

    #[test]
    fn validate_flags_small_regularizer_constant() {
        let (mut step, _) = lasso_step(5, 0.3);
        step.regularizer_lipschitz *= 0.5;
        let rep = validate_constants(&step, 50, 2.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(rep.regularizer_lipschitz > 0.0, "{rep:?}");
    }

    #[test]
    fn zero_model_gives_exact_gradient() {
        let (step, _) = lasso_step(2, 0.1);
        let x = dvector![0.1, -0.2, 0.3, 0.0, 1.0, 2.0];
        let g = noisy_gradient(&step, &ErrorModel::zero(), 4, &x);
        assert_eq!(g.value, step.smooth_gradient(&x));
        assert_eq!(g.error.norm(), 0.0);
    }

    #[test]
    fn prox_only_model_leaves_gradient() {
        let (step, _) = lasso_step(2, 0.1);
        let x = DVector::from_element(6, 0.5);
        let m = ErrorModel {
            seed: 9,
            gradient_std: 0.0,
            prox_std: 0.05,
            prox_cap: 0.05,
        };
        assert_eq!(
            noisy_gradient(&step, &m, 1, &x).value,
            step.smooth_gradient(&x)
        );
    }

    #[test]
    fn gaussian_model_replays_bit_identically() {
        let (step, _) = lasso_step(2, 0.1);
        let x = DVector::from_element(6, 0.5);
        let m = ErrorModel::gaussian(7, 0.05, 0.2);
        let a = noisy_gradient(&step, &m, 1, &x);
        let b = noisy_gradient(&step, &m, 1, &x);
        assert_eq!(a, b);
        assert!(a.error.norm() > 0.0);
        assert_ne!(a.error, noisy_gradient(&step, &m, 2, &x).error);
    }

    #[test]
    fn prox_offsets_respect_bound() {
        let m = ErrorModel::gaussian(11, 1.0, 0.05);
        for k in 1..=1000 {
            let (off, eps) = m.prox_error(k, 7);
            assert!(eps <= 0.05);
            assert!(off.norm() <= eps, "k={k}");
        }
    }

    #[test]
    fn projections() {
        let ball = Domain::ball_with_diameter(2, 2.0);
        let p = ball.project(&dvector![3.0, 4.0]);
        assert!((p - dvector![0.6, 0.8]).norm() < 1e-15);
        let cube = Domain::cube_with_diameter(4, 20.0);
        assert!((cube.diameter().unwrap() - 20.0).abs() < 1e-12);
        let s = Domain::Simplex { dim: 3 };
        let q = s.project(&dvector![0.9, 0.8, -1.0]);
        assert!((&q - dvector![0.55, 0.45, 0.0]).norm() < 1e-12);
        assert!(s.contains(&q, 1e-12));
    }

    #[test]
    fn separation_smoothness_is_hessian_top_eigenvalue() {
        let fit = SeparationFit {
            observed: DMatrix::zeros(2, 2),
            mu_low_rank: 0.005,
            mu_sparse: 2.0,
        };
        // Dense Hessian by differencing the gradient.
        let n = fit.dim();
        let g0 = fit.gradient(&DVector::zeros(n));
        let h = DMatrix::from_fn(n, n, |i, j| {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            (fit.gradient(&e) - &g0)[i]
        });
        let top = h
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max);
        assert!((fit.smoothness() - top).abs() < 1e-12);
    }

    #[test]
    fn stream_indexing_is_one_based() {
        let (step, _) = lasso_step(1, 0.1);
        let s = ProblemStream::new(vec![step.clone(), step], Domain::WholeSpace);
        assert!(s.step_at(0).is_none());
        assert!(s.step_at(2).is_some());
        assert!(s.step_at(3).is_none());
    }
}
