//! Inexact online proximal mirror descent for time-varying composite
//! optimization.
//!
//! At every round `k` the player receives a loss `f_k = g_k + h_k` with a
//! smooth part `g_k` and a prox-friendly regularizer `h_k`, and plays
//!
//! ```text
//! x_k ≈ argmin_{x ∈ Ω}  h_k(x) + <∇g_k(x_{k-1}) + e_k, x> + V_ω(x, x_{k-1}) / λ
//! ```
//!
//! where `e_k` is a gradient error and the argmin is only resolved to within
//! a distance `ε_k`. The crate provides the iteration itself ([`solver`]),
//! the geometry ([`bregman`], [`prox`]), loss streams with error injection
//! ([`losses`]), dynamic-regret accounting together with computable regret
//! bounds ([`regret`]), and the two reference experiments ([`experiments`]).

pub mod bregman;
pub mod experiments;
pub mod losses;
pub mod prox;
pub mod regret;
pub mod rng;
pub mod solver;

pub use nalgebra::{DMatrix, DVector};

pub use bregman::{BregmanError, DistanceGenerator};
pub use losses::{CompositeLossStep, Domain, ErrorModel, ProblemStream, SmoothLoss};
pub use prox::{ProxError, ProxRule, SubproblemSpec};
pub use regret::{BoundLedger, Regime, RegretError};
pub use solver::{RunError, RunTrace, SolverConfig, StepRecord};

/// Dense real vector used for every iterate and gradient.
pub type Vector = DVector<f64>;
