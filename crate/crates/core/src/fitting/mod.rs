//! Least-squares extraction of bare-cavity and Fano parameters from
//! reflectivity scans.

mod bare;
mod fano;

pub use bare::{
    bare_cavity_amplitude, fit_bare_cavity, initial_guess_bare, BareCavityFit, BareCavityModel,
};
pub use fano::{fit_fano, FanoContext, FanoFit};

use crate::error::{Error, Result};
use crate::optimize::Weighting;
use crate::scalar::{lit, Real};

fn check_data<T: Real>(grid: &[T], data: &[T], min_points: usize) -> Result<()> {
    crate::grid::check_grid(grid, "scan")?;
    if grid.len() != data.len() {
        return Err(Error::input(format!(
            "grid has {} points but data has {}",
            grid.len(),
            data.len()
        )));
    }
    if data.len() < min_points {
        return Err(Error::input(format!(
            "need at least {min_points} data points, got {}",
            data.len()
        )));
    }
    if let Some(bad) = data.iter().position(|v| !v.is_finite() || *v < T::zero()) {
        return Err(Error::input(format!(
            "data must be finite and non-negative (index {bad} is {})",
            data[bad]
        )));
    }
    Ok(())
}

/// Per-point residual weights.
fn weights<T: Real>(data: &[T], weighting: Weighting) -> Vec<T> {
    match weighting {
        Weighting::Uniform => vec![T::one(); data.len()],
        Weighting::Poisson => {
            let peak = data.iter().fold(T::zero(), |m, &v| m.max(v));
            let floor = peak * lit(1e-6) + T::min_positive_value();
            data.iter()
                .map(|&v| T::one() / v.max(floor).sqrt())
                .collect()
        }
    }
}

fn rms<T: Real>(values: impl Iterator<Item = T>) -> T {
    let (sum, n) = values.fold((T::zero(), 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        return T::zero();
    }
    (sum / T::from_usize(n).unwrap_or_else(T::one)).sqrt()
}
