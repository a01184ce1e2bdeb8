//! Distance-generating functions and their Bregman divergences.
//!
//! A generator `ω` is declared together with its strong-convexity modulus
//! `σ_ω` and the Lipschitz constant `G_ω` of its gradient. Both constants are
//! metadata: they are checked by sampling ([`sample_constants`]), not derived.

use nalgebra::DVector;
use rand::Rng;
use thiserror::Error;

/// Default tolerance for the three-point and Pythagorean identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
/// Default step of the central finite differences used to check gradients.
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-6;
/// Default coordinate floor of the smoothed negative entropy.
pub const ENTROPY_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BregmanError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid generator constants: sigma_omega = {sigma}, g_omega = {g}")]
    InvalidConstants { sigma: f64, g: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Euclidean,
    /// `Σ t ln t` on `[floor, ceiling]`, continued quadratically outside so
    /// that `1/ceiling ≤ φ'' ≤ 1/floor` everywhere.
    NegEntropy {
        floor: f64,
        ceiling: f64,
    },
}

/// The function `ω` defining the mirror geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceGenerator {
    kind: Kind,
    sigma_omega: f64,
    g_omega: f64,
    name: String,
}

impl DistanceGenerator {
    /// `ω(x) = ½‖x‖²`, for which `V_ω(x, y) = ½‖x − y‖²` and `σ_ω = G_ω = 1`.
    pub fn euclidean() -> Self {
        Self {
            kind: Kind::Euclidean,
            sigma_omega: 1.0,
            g_omega: 1.0,
            name: "euclidean".to_string(),
        }
    }

    /// Negative entropy with the default floor and a ceiling of one, which
    /// covers the probability simplex.
    pub fn neg_entropy() -> Self {
        Self::neg_entropy_with(ENTROPY_FLOOR, 1.0).expect("default entropy bounds are valid")
    }

    /// Negative entropy `Σ t ln t`, exact on `[floor, ceiling]` per
    /// coordinate and extended by its second-order Taylor expansion outside.
    ///
    /// The extension keeps the gradient finite and Lipschitz on all of `ℝⁿ`:
    /// `σ_ω = 1/ceiling`, `G_ω = 1/floor`.
    pub fn neg_entropy_with(floor: f64, ceiling: f64) -> Result<Self, BregmanError> {
        if !(floor > 0.0 && ceiling > floor && ceiling.is_finite()) {
            return Err(BregmanError::InvalidConstants {
                sigma: 1.0 / ceiling,
                g: 1.0 / floor,
            });
        }
        Ok(Self {
            kind: Kind::NegEntropy { floor, ceiling },
            sigma_omega: 1.0 / ceiling,
            g_omega: 1.0 / floor,
            name: "neg_entropy".to_string(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sigma_omega(&self) -> f64 {
        self.sigma_omega
    }

    pub fn g_omega(&self) -> f64 {
        self.g_omega
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, Kind::Euclidean)
    }

    /// `(floor, ceiling)` of the entropy generator, `None` for Euclidean.
    pub fn entropy_bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            Kind::NegEntropy { floor, ceiling } => Some((floor, ceiling)),
            Kind::Euclidean => None,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self.kind {
            Kind::Euclidean => 0.5 * x.norm_squared(),
            Kind::NegEntropy { floor, ceiling } => {
                x.iter().map(|&t| entropy_phi(t, floor, ceiling)).sum()
            }
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|t| self.derivative(t))
    }

    /// `φ'(t)` of the separable generator.
    pub fn derivative(&self, t: f64) -> f64 {
        match self.kind {
            Kind::Euclidean => t,
            Kind::NegEntropy { floor, ceiling } => entropy_dphi(t, floor, ceiling),
        }
    }

    /// Inverse of the gradient map, used by closed-form mirror steps.
    pub fn gradient_inverse(&self, theta: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            Kind::Euclidean => theta.clone(),
            Kind::NegEntropy { floor, ceiling } => theta.map(|s| {
                let lo = floor.ln() + 1.0;
                let hi = ceiling.ln() + 1.0;
                if s < lo {
                    floor + floor * (s - lo)
                } else if s > hi {
                    ceiling + ceiling * (s - hi)
                } else {
                    (s - 1.0).exp()
                }
            }),
        }
    }
}

fn entropy_phi(t: f64, floor: f64, ceiling: f64) -> f64 {
    if t < floor {
        let d = t - floor;
        floor * floor.ln() + (floor.ln() + 1.0) * d + d * d / (2.0 * floor)
    } else if t > ceiling {
        let d = t - ceiling;
        ceiling * ceiling.ln() + (ceiling.ln() + 1.0) * d + d * d / (2.0 * ceiling)
    } else {
        t * t.ln()
    }
}

fn entropy_dphi(t: f64, floor: f64, ceiling: f64) -> f64 {
    if t < floor {
        floor.ln() + 1.0 + (t - floor) / floor
    } else if t > ceiling {
        ceiling.ln() + 1.0 + (t - ceiling) / ceiling
    } else {
        t.ln() + 1.0
    }
}

fn same_dim(x: &DVector<f64>, y: &DVector<f64>) -> Result<(), BregmanError> {
    if x.len() == y.len() {
        Ok(())
    } else {
        Err(BregmanError::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        })
    }
}

/// `V_ω(x, y) = ω(x) − ω(y) − <∇ω(y), x − y>`.
pub fn divergence(
    gen: &DistanceGenerator,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<f64, BregmanError> {
    same_dim(x, y)?;
    let v = match gen.kind {
        Kind::Euclidean => 0.5 * (x - y).norm_squared(),
        Kind::NegEntropy { floor, ceiling } => x
            .iter()
            .zip(y.iter())
            .map(|(&a, &b)| {
                entropy_phi(a, floor, ceiling)
                    - entropy_phi(b, floor, ceiling)
                    - entropy_dphi(b, floor, ceiling) * (a - b)
            })
            .sum(),
    };
    Ok(v.max(0.0))
}

/// Derivative of `V_ω(x, y)` in its first argument: `∇ω(x) − ∇ω(y)`.
pub fn divergence_gradient(
    gen: &DistanceGenerator,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>, BregmanError> {
    same_dim(x, y)?;
    Ok(gen.gradient(x) - gen.gradient(y))
}

/// Residual of `∇V(y, x) = ∇V(y, z) + ∇V(z, x)`.
pub fn check_three_point(
    gen: &DistanceGenerator,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<f64, BregmanError> {
    same_dim(x, y)?;
    same_dim(x, z)?;
    let lhs = divergence_gradient(gen, y, x)?;
    let rhs = divergence_gradient(gen, y, z)? + divergence_gradient(gen, z, x)?;
    Ok((lhs - rhs).norm())
}

/// Residual of `<z − y, ∇V(y, x)> = V(z, x) − V(z, y) − V(y, x)`.
pub fn check_pythagorean(
    gen: &DistanceGenerator,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<f64, BregmanError> {
    same_dim(x, y)?;
    same_dim(x, z)?;
    let lhs = (z - y).dot(&divergence_gradient(gen, y, x)?);
    let rhs = raw_divergence(gen, z, x) - raw_divergence(gen, z, y) - raw_divergence(gen, y, x);
    Ok((lhs - rhs).abs())
}

// Unclamped, so the identity check sees the arithmetic as is.
fn raw_divergence(gen: &DistanceGenerator, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    match gen.kind {
        Kind::Euclidean => 0.5 * (x - y).norm_squared(),
        _ => gen.value(x) - gen.value(y) - gen.gradient(y).dot(&(x - y)),
    }
}

/// Worst margins found when sampling the declared generator constants.
///
/// A margin is `observed − allowed`; nonpositive means the declaration held
/// on every sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorCheck {
    pub strong_convexity: f64,
    pub gradient_lipschitz: f64,
}

impl GeneratorCheck {
    pub fn passed(&self) -> bool {
        self.strong_convexity <= 0.0 && self.gradient_lipschitz <= 0.0
    }
}

/// Samples pairs uniformly from `[lo, hi]^dim` and measures how far the
/// declared `σ_ω` and `G_ω` are from being violated.
pub fn sample_constants<R: Rng + ?Sized>(
    gen: &DistanceGenerator,
    dim: usize,
    lo: f64,
    hi: f64,
    samples: usize,
    rng: &mut R,
) -> GeneratorCheck {
    let mut sc = f64::NEG_INFINITY;
    let mut lip = f64::NEG_INFINITY;
    for _ in 0..samples {
        let x = DVector::from_fn(dim, |_, _| rng.random_range(lo..hi));
        let y = DVector::from_fn(dim, |_, _| rng.random_range(lo..hi));
        let d2 = (&x - &y).norm_squared();
        let lower = gen.value(&y) + gen.gradient(&y).dot(&(&x - &y)) + 0.5 * gen.sigma_omega * d2;
        // Scale-aware slack for rounding in the value differences.
        let slack = 1e-12 * (1.0 + gen.value(&x).abs() + gen.value(&y).abs());
        sc = sc.max(lower - gen.value(&x) - slack);
        let gdiff = (gen.gradient(&x) - gen.gradient(&y)).norm();
        lip = lip.max(gdiff - gen.g_omega * d2.sqrt() - 1e-12);
    }
    GeneratorCheck {
        strong_convexity: sc,
        gradient_lipschitz: lip,
    }
}
