use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{check_data, rms, weights};
use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::model::{CavityParams, FanoProfile, NuclearEnsemble};
use crate::optimize::{
    least_squares_minimize, Bounds, InitialGuess, LeastSquaresProblem, OptimizerConfig, Termination,
};
use crate::scalar::{lit, Real};

/// The lineshape must extend this many widths to each side of the resonance.
const MIN_SPAN_WIDTHS: f64 = 10.0;
const MAX_WIDTH_IN_GAMMA: f64 = 1e6;
const GRID_POINTS_LIMIT: usize = 500;
const GRID_CENTERS: usize = 161;
const GRID_WIDTHS: usize = 60;

/// Fixed quantities the Fano fit relies on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FanoContext<T> {
    /// Natural linewidth γ; sets the lower width bound and Π = (W − γ)/W.
    pub gamma: T,
    /// Off-resonant level of the model lineshape; the fitted `a` is relative
    /// to it.
    pub prefactor: T,
    /// Predicted coupling factor r_E·e^{iφ_E}. The data fix q only up to
    /// complex conjugation; this selects the branch. Without it the upper
    /// half-plane is used.
    pub coupling: Option<Complex<T>>,
    /// Model Lamb shift for comparison with the fitted shift.
    pub predicted_shift: Option<T>,
    /// Fit an additive background `b ≥ 0` (degenerate with `a` and `q` for
    /// a single spectrum, so off by default).
    pub fit_background: bool,
}

impl<T: Real> FanoContext<T> {
    pub fn new(gamma: T) -> Self {
        Self {
            gamma,
            prefactor: T::one(),
            coupling: None,
            predicted_shift: None,
            fit_background: false,
        }
    }

    /// Context from a bare-cavity description at grazing angle `theta`.
    pub fn from_cavity(theta: T, cavity: &CavityParams<T>, gamma: T) -> Result<Self> {
        let delta_c = crate::model::cavity_detuning(theta, cavity)?;
        let w = crate::model::coupling_factor(delta_c, cavity)?;
        let a = cavity.coupling_imbalance();
        let d2 = delta_c * delta_c;
        let k = cavity.kappa;
        Ok(Self {
            gamma,
            prefactor: (a * a + d2) / (k * k + d2),
            coupling: Some(w),
            predicted_shift: None,
            fit_background: false,
        })
    }

    /// Adds the model's Lamb shift for `ensemble`.
    pub fn with_ensemble(
        mut self,
        theta: T,
        cavity: &CavityParams<T>,
        ensemble: &NuclearEnsemble<T>,
    ) -> Result<Self> {
        self.predicted_shift = Some(FanoProfile::at(theta, cavity, ensemble)?.lamb_shift);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > T::zero()) {
            return Err(Error::input("linewidth must be positive"));
        }
        if !(self.prefactor.is_finite() && self.prefactor > T::zero()) {
            return Err(Error::input("prefactor must be positive"));
        }
        Ok(())
    }

    /// Picks q or q̄, whichever is closer to the model value i + Π·r_E e^{iφ_E}
    /// with Π taken from the fitted width.
    fn pick_branch(&self, q: Complex<T>, pi_strength: T) -> Complex<T> {
        let q = Complex::new(q.re, q.im.abs());
        let Some(w) = self.coupling else {
            return q;
        };
        let expected = Complex::<T>::i() + w * pi_strength;
        if (q.conj() - expected).norm() < (q - expected).norm() {
            q.conj()
        } else {
            q
        }
    }
}

/// Fitted Fano lineshape `a·P·|ε + q|²/(ε² + 1) + b` with `ε = 2(ω + δ)/W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FanoFit<T> {
    pub q: Complex<T>,
    /// Π = (W − γ)/W.
    pub pi_strength: T,
    /// Total width W (units of ω₀).
    pub width: T,
    /// Fitted energy shift δ; includes the Lamb shift.
    pub shift: T,
    pub predicted_lamb_shift: Option<T>,
    pub a: T,
    pub b: T,
    /// One-sigma uncertainties in the order (Re q, Im q, W, δ, a[, b]).
    pub uncertainties: Option<Vec<T>>,
    /// RMS residual relative to the off-resonant level a·P + b.
    pub residual_rms: T,
    /// Smaller of the two grid extents around the resonance, in widths.
    pub span_in_widths: T,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
}

impl<T: Real> FanoFit<T> {
    pub fn lineshape(&self, omega: T, prefactor: T) -> T {
        let eps = lit::<T>(2.0) * (omega + self.shift) / self.width;
        self.a * crate::model::fano_lineshape(eps, self.q, prefactor) + self.b
    }
}

/// Residuals on normalized data; energies in units of γ.
/// Parameters: (Re q, Im q, W, s, a[, b]).
struct FanoProblem<'a, T> {
    u: &'a [T],
    y: &'a [T],
    weights: Vec<T>,
    prefactor: T,
    background: bool,
}

impl<T: Real> FanoProblem<'_, T> {
    fn model(&self, p: &[T], u: T) -> T {
        let eps = lit::<T>(2.0) * (u + p[3]) / p[2];
        let b = if self.background { p[5] } else { T::zero() };
        let num = (eps + p[0]) * (eps + p[0]) + p[1] * p[1];
        p[4] * self.prefactor * num / (eps * eps + T::one()) + b
    }
}

impl<T: Real> LeastSquaresProblem<T> for FanoProblem<'_, T> {
    fn n_params(&self) -> usize {
        if self.background {
            6
        } else {
            5
        }
    }
    fn n_residuals(&self) -> usize {
        self.y.len()
    }
    fn residuals(&self, p: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (self.model(p, self.u[i]) - self.y[i]) * self.weights[i];
        }
    }
    fn jacobian(&self, p: &[T], jac: &mut [T]) -> bool {
        let n = self.n_params();
        let two = lit::<T>(2.0);
        let (qr, qi, w, s, a) = (p[0], p[1], p[2], p[3], p[4]);
        let ap = a * self.prefactor;
        for i in 0..self.y.len() {
            let eps = two * (self.u[i] + s) / w;
            let den = eps * eps + T::one();
            let num = (eps + qr) * (eps + qr) + qi * qi;
            let dl_deps = (two * (eps + qr) * den - two * eps * num) / (den * den);
            let wt = self.weights[i];
            let row = &mut jac[i * n..(i + 1) * n];
            row[0] = ap * two * (eps + qr) / den * wt;
            row[1] = ap * two * qi / den * wt;
            row[2] = ap * dl_deps * (-eps / w) * wt;
            row[3] = ap * dl_deps * (two / w) * wt;
            row[4] = self.prefactor * num / den * wt;
            if self.background {
                row[5] = wt;
            }
        }
        true
    }
}

/// Variable-projection scan over (center, width): the lineshape is linear in
/// `[1, ε/(ε²+1), 1/(ε²+1)]` once those two are fixed.
fn grid_start<T: Real>(u: &[T], y: &[T], min_width: T) -> Option<(T, T, [T; 3])> {
    let stride = u.len().div_ceil(GRID_POINTS_LIMIT).max(1);
    let idx: Vec<usize> = (0..u.len()).step_by(stride).collect();
    let (u0, u1) = (u[0], u[u.len() - 1]);
    let span = u1 - u0;
    let w_lo = min_width.max(span / lit(1e4));
    let w_hi = (span * lit(4.0)).min(lit(MAX_WIDTH_IN_GAMMA));
    if !(w_hi > w_lo) {
        return None;
    }
    let two = lit::<T>(2.0);
    let mut best: Option<(T, T, T, [T; 3])> = None;
    for iw in 0..GRID_WIDTHS {
        let f = T::from_usize(iw).unwrap() / T::from_usize(GRID_WIDTHS - 1).unwrap();
        let width = w_lo * (w_hi / w_lo).powf(f);
        for ic in 0..GRID_CENTERS {
            let g = T::from_usize(ic).unwrap() / T::from_usize(GRID_CENTERS - 1).unwrap();
            let center = u0 + span * g;
            let mut ata = [T::zero(); 9];
            let mut atb = [T::zero(); 3];
            for &k in &idx {
                let eps = two * (u[k] - center) / width;
                let inv = T::one() / (eps * eps + T::one());
                let basis = [T::one(), eps * inv, inv];
                for r in 0..3 {
                    atb[r] += basis[r] * y[k];
                    for c in 0..3 {
                        ata[r * 3 + c] += basis[r] * basis[c];
                    }
                }
            }
            let Some(coef) = solve(&ata, 3, &atb) else {
                continue;
            };
            let ssr: T = idx
                .iter()
                .map(|&k| {
                    let eps = two * (u[k] - center) / width;
                    let inv = T::one() / (eps * eps + T::one());
                    let r = coef[0] + coef[1] * eps * inv + coef[2] * inv - y[k];
                    r * r
                })
                .sum();
            if coef[0] > T::zero() && best.as_ref().is_none_or(|b| ssr < b.0) {
                best = Some((ssr, center, width, [coef[0], coef[1], coef[2]]));
            }
        }
    }
    best.map(|(_, c, w, coef)| (c, w, coef))
}

/// Fits the Fano lineshape to an energy scan (offsets ω − ω₀, units of ω₀).
///
/// The data are normalized by their mean before fitting, so scaling the input
/// by `c > 0` scales `a` and `b` by `c` and leaves `q`, width and shift
/// unchanged. A fitted width below the grid spacing is an error.
pub fn fit_fano<T: Real>(
    omega_grid: &[T],
    data: &[T],
    context: &FanoContext<T>,
    config: &OptimizerConfig<T>,
) -> Result<FanoFit<T>> {
    check_data(omega_grid, data, 12)?;
    context.validate()?;
    config.validate()?;
    let n = data.len();
    let level = data.iter().copied().sum::<T>() / T::from_usize(n).unwrap();
    if !(level > T::zero()) {
        return Err(Error::Fit("scan has no positive signal level".into()));
    }
    let gamma = context.gamma;
    let u: Vec<T> = omega_grid.iter().map(|&x| x / gamma).collect();
    let y: Vec<T> = data.iter().map(|&v| v / level).collect();
    let spacing = (u[n - 1] - u[0]) / T::from_usize(n - 1).unwrap();
    let background = context.fit_background;
    let n_params = if background { 6 } else { 5 };
    let p_fac = context.prefactor;
    let mut diagnostics = Vec::new();

    let start = match &config.initial_guess {
        InitialGuess::Explicit(v) if v.len() == n_params => {
            let mut s = v.clone();
            // Explicit starts use physical units.
            s[2] /= gamma;
            s[3] /= gamma;
            s[4] /= level;
            if background {
                s[5] /= level;
            }
            s
        }
        InitialGuess::Explicit(v) => {
            return Err(Error::input(format!(
                "Fano start needs {n_params} values, got {}",
                v.len()
            )))
        }
        InitialGuess::Heuristic => {
            let (center, width, coef) = grid_start(&u, &y, T::one())
                .ok_or_else(|| Error::Fit("no resonance found in the energy scan".into()))?;
            let alpha = coef[0];
            let qr = coef[1] / (lit::<T>(2.0) * alpha);
            let q2 = coef[2] / alpha + T::one();
            let qi = (q2 - qr * qr).max(lit(1e-4)).sqrt();
            let mut s = vec![qr, qi, width.max(T::one()), -center, alpha / p_fac];
            if background {
                s.push(T::zero());
            }
            s
        }
    };

    let span = u[n - 1] - u[0];
    let bounds = match &config.bounds {
        Some(b) if b.len() != n_params => {
            return Err(Error::input(format!("Fano bounds need {n_params} entries")))
        }
        Some(b) => {
            // Physical units for width, shift and scale, as with explicit starts.
            let conv = |v: &[T]| {
                let mut v = v.to_vec();
                v[2] /= gamma;
                v[3] /= gamma;
                v[4] /= level;
                if background {
                    v[5] /= level;
                }
                v
            };
            Bounds::new(conv(&b.lower), conv(&b.upper))?
        }
        None => {
            let big = lit::<T>(1e6);
            let mut lower = vec![-big, -big, T::one(), -(u[n - 1] + span), T::zero()];
            let mut upper = vec![big, big, lit(MAX_WIDTH_IN_GAMMA), span - u[0], big];
            if background {
                lower.push(T::zero());
                upper.push(big);
            }
            Bounds::new(lower, upper)?
        }
    };

    let problem = FanoProblem {
        u: &u,
        y: &y,
        weights: weights(&y, config.weighting),
        prefactor: p_fac,
        background,
    };
    let min = least_squares_minimize(&problem, &start, Some(&bounds), config)?;
    let p = &min.params;
    let (width_u, shift_u, a_n) = (p[2], p[3], p[4]);
    let b_n = if background { p[5] } else { T::zero() };
    if !(width_u > spacing) {
        return Err(Error::Fit(format!(
            "fitted width {} γ is below the grid spacing {} γ",
            width_u, spacing
        )));
    }
    if !(a_n > T::zero()) {
        return Err(Error::Fit("fitted scale is not positive".into()));
    }
    let off_level = a_n * p_fac + b_n;
    let residual_rms =
        rms(u.iter().zip(&y).map(|(&ui, &yi)| problem.model(p, ui) - yi)) / off_level;

    let center = -shift_u;
    let span_in_widths = ((center - u[0]).min(u[n - 1] - center)) / width_u;
    if span_in_widths < lit(MIN_SPAN_WIDTHS) {
        diagnostics.push(format!(
            "scan covers only {span_in_widths:.3} widths on the short side of the resonance"
        ));
    }
    if !min.converged() {
        diagnostics.push(format!("optimizer stopped: {}", min.termination));
    }

    let pi_strength = (width_u - T::one()) / width_u;
    let q = context.pick_branch(Complex::new(p[0], p[1]), pi_strength);
    let uncertainties = min.uncertainties(n).map(|mut s| {
        s[2] *= gamma;
        s[3] *= gamma;
        s[4] *= level;
        if background {
            s[5] *= level;
        }
        s
    });
    Ok(FanoFit {
        q,
        pi_strength,
        width: width_u * gamma,
        shift: shift_u * gamma,
        predicted_lamb_shift: context.predicted_shift,
        a: a_n * level,
        b: b_n * level,
        uncertainties,
        residual_rms,
        span_in_widths,
        converged: min.converged(),
        termination: min.termination,
        iterations: min.iterations,
        diagnostics,
    })
}
