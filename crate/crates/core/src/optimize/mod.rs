//! Bound-constrained nonlinear least squares.
//!
//! [`least_squares_minimize`] is a Levenberg–Marquardt iteration with
//! Marquardt diagonal scaling. Jacobians come from the problem when it
//! provides one and from central differences otherwise. If the damping runs
//! away without meeting a tolerance, a Nelder–Mead pass is run from the last
//! accepted point and the damped iteration resumes once from its result.

mod lm;
mod simplex;

pub use lm::least_squares_minimize;
pub use simplex::nelder_mead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Residual model `r(p)` with `m` residuals and `n` parameters.
pub trait LeastSquaresProblem<T: Real> {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, params: &[T], out: &mut [T]);
    /// Row-major `m × n` Jacobian. Returning `false` selects finite differences.
    fn jacobian(&self, _params: &[T], _jac: &mut [T]) -> bool {
        false
    }
}

/// Adapts a closure `(params, residuals_out)` into a [`LeastSquaresProblem`].
pub struct FnProblem<F> {
    n_params: usize,
    n_residuals: usize,
    f: F,
}

impl<F> FnProblem<F> {
    pub fn new(n_params: usize, n_residuals: usize, f: F) -> Self {
        Self {
            n_params,
            n_residuals,
            f,
        }
    }
}

impl<T: Real, F: Fn(&[T], &mut [T])> LeastSquaresProblem<T> for FnProblem<F> {
    fn n_params(&self) -> usize {
        self.n_params
    }
    fn n_residuals(&self) -> usize {
        self.n_residuals
    }
    fn residuals(&self, params: &[T], out: &mut [T]) {
        (self.f)(params, out)
    }
}

/// Box constraints, one interval per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Bounds<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Bounds<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::input("bounds: lower and upper differ in length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::input(
                "bounds: every lower bound must not exceed its upper bound",
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![T::neg_infinity(); n],
            upper: vec![T::infinity(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn project(&self, x: &mut [T]) {
        for ((v, &l), &u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.max(l).min(u);
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, l), u)| v >= l && v <= u)
    }
}

/// Where the iteration starts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "T: Real")]
pub enum InitialGuess<T> {
    /// Data-driven starting points chosen by each fit.
    #[default]
    Heuristic,
    /// Use these parameter values (in the fit's reported units).
    Explicit(Vec<T>),
}

/// Residual weighting applied by the spectral fits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    /// Residuals divided by sqrt of the measured value (counting statistics).
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default)]
pub struct OptimizerConfig<T> {
    pub max_iterations: usize,
    /// Relative step size below which parameters count as converged.
    pub x_tol: T,
    /// Relative cost reduction below which the residual counts as converged.
    pub f_tol: T,
    /// Cosine between residual and Jacobian columns below which the gradient
    /// counts as zero.
    pub g_tol: T,
    pub initial_damping: T,
    /// Run a derivative-free pass when the damped iteration stalls.
    pub restart_on_stall: bool,
    pub initial_guess: InitialGuess<T>,
    /// Replaces the fit's physical bounds when set.
    pub bounds: Option<Bounds<T>>,
    pub weighting: Weighting,
}

impl<T: Real> Default for OptimizerConfig<T> {
    fn default() -> Self {
        let eps = T::epsilon();
        Self {
            max_iterations: 500,
            x_tol: eps * lit(1e6),
            f_tol: eps * lit(50.0),
            g_tol: eps * lit(1e4),
            initial_damping: lit(1e-3),
            restart_on_stall: true,
            initial_guess: InitialGuess::Heuristic,
            bounds: None,
            weighting: Weighting::Uniform,
        }
    }
}

impl<T: Real> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: T| v.is_finite() && v > T::zero();
        if !(positive(self.x_tol) && positive(self.f_tol) && positive(self.g_tol)) {
            return Err(Error::input("optimizer tolerances must be positive"));
        }
        if !positive(self.initial_damping) {
            return Err(Error::input("initial damping must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::input("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ZeroResidual,
    GradientTolerance,
    ParameterTolerance,
    ResidualTolerance,
    IterationCap,
    Stall,
    /// A trial point produced non-finite residuals; the last good state is kept.
    NonFinite,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::ZeroResidual
                | Termination::GradientTolerance
                | Termination::ParameterTolerance
                | Termination::ResidualTolerance
        )
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::ZeroResidual => "zero residual",
            Termination::GradientTolerance => "gradient tolerance met",
            Termination::ParameterTolerance => "parameter tolerance met",
            Termination::ResidualTolerance => "residual tolerance met",
            Termination::IterationCap => "iteration cap reached",
            Termination::Stall => "stalled",
            Termination::NonFinite => "non-finite residuals",
        })
    }
}

/// Result of a minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Minimum<T> {
    pub params: Vec<T>,
    /// ½·Σr² at `params`.
    pub cost: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// A derivative-free restart was used.
    pub restarted: bool,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<T>,
    /// (JᵀJ)⁻¹ at the optimum, row-major; `None` if singular.
    pub inverse_curvature: Option<Vec<T>>,
}

impl<T: Real> Minimum<T> {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }

    /// One-sigma parameter uncertainties from the final curvature, scaled by
    /// the reduced chi-square of `n_residuals` residuals.
    pub fn uncertainties(&self, n_residuals: usize) -> Option<Vec<T>> {
        let n = self.params.len();
        let cov = self.inverse_curvature.as_ref()?;
        let dof = n_residuals.checked_sub(n).filter(|&d| d > 0)?;
        let s2 = lit::<T>(2.0) * self.cost / T::from_usize(dof)?;
        Some(
            (0..n)
                .map(|j| (cov[j * n + j] * s2).max(T::zero()).sqrt())
                .collect(),
        )
    }
}
