use rayon::prelude::*;

use num_complex::Complex;

use super::{parratt_reflectivity, LayerStack};
use crate::error::{Error, Result};
use crate::grid::{check_grid, linspace};
use crate::model::Regime;
use crate::scalar::{lit, wrap_phase, Real};

pub const DEFAULT_ROCKING_MIN: f64 = 2.0e-3;
pub const DEFAULT_ROCKING_MAX: f64 = 2.7e-3;
pub const DEFAULT_ROCKING_POINTS: usize = 2001;
/// Half-span of the default energy scan in natural linewidths.
pub const DEFAULT_ENERGY_SPAN_GAMMA: f64 = 200.0;
pub const DEFAULT_ENERGY_POINTS: usize = 4001;

/// 2.0–2.7 mrad in 2001 steps.
pub fn default_rocking_grid<T: Real>() -> Vec<T> {
    linspace(
        lit(DEFAULT_ROCKING_MIN),
        lit(DEFAULT_ROCKING_MAX),
        DEFAULT_ROCKING_POINTS,
    )
}

/// ±200γ around the resonance in 4001 steps.
pub fn default_energy_grid<T: Real>(gamma: T) -> Vec<T> {
    let span = gamma * lit(DEFAULT_ENERGY_SPAN_GAMMA);
    linspace(-span, span, DEFAULT_ENERGY_POINTS)
}

/// Electronic reflectivity |R|² versus grazing angle, off the nuclear resonance.
pub fn rocking_scan<T: Real>(stack: &LayerStack<T>, theta_grid: &[T]) -> Result<Vec<T>> {
    check_grid(theta_grid, "angle")?;
    let bare = stack.bare();
    theta_grid
        .par_iter()
        .map(|&theta| parratt_reflectivity(&bare, theta, T::zero()).map(|r| r.norm_sqr()))
        .collect()
}

/// Complex reflection amplitudes of the bare stack over `theta_grid`.
pub fn rocking_amplitudes<T: Real>(
    stack: &LayerStack<T>,
    theta_grid: &[T],
) -> Result<Vec<Complex<T>>> {
    check_grid(theta_grid, "angle")?;
    let bare = stack.bare();
    theta_grid
        .par_iter()
        .map(|&theta| parratt_reflectivity(&bare, theta, T::zero()))
        .collect()
}

/// Coupling regime read from the phase of the reflection amplitude across a
/// mode dip.
///
/// Past critical coupling the amplitude circles the origin as the angle
/// crosses the mode, so its unwrapped phase advances by close to 2π; below
/// it the phase swings and returns.
pub fn regime_from_amplitudes<T: Real>(amplitudes: &[Complex<T>]) -> Regime {
    let mut total = T::zero();
    for pair in amplitudes.windows(2) {
        total += wrap_phase(pair[1].arg() - pair[0].arg());
    }
    if total.abs() > T::PI() {
        Regime::Overcritical
    } else {
        Regime::Undercritical
    }
}

/// Reflectivity |R|² versus probe offset ω − ω₀ at fixed angle, with the
/// resonant layer at the given isotope abundance.
pub fn energy_scan<T: Real>(
    stack: &LayerStack<T>,
    theta: T,
    omega_grid: &[T],
    abundance: T,
) -> Result<Vec<T>> {
    check_grid(omega_grid, "energy")?;
    if stack.resonant_layer().is_none() {
        return Err(Error::input("energy scan needs a nuclear-resonant layer"));
    }
    let stack = stack.with_abundance(abundance)?;
    omega_grid
        .par_iter()
        .map(|&omega| parratt_reflectivity(&stack, theta, omega).map(|r| r.norm_sqr()))
        .collect()
}
