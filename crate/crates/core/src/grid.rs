//! Sampling grids.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace<T: Real>(start: T, stop: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / lit::<T>((n - 1) as f64);
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        stop
                    } else {
                        start + step * lit::<T>(i as f64)
                    }
                })
                .collect()
        }
    }
}

/// Checks that a grid is non-empty, finite and strictly increasing.
pub fn check_grid<T: Real>(grid: &[T], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid(format!("{what} grid is empty")));
    }
    if let Some(i) = grid.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "{what} grid has a non-finite value at index {i}"
        )));
    }
    if let Some(i) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "{what} grid is not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints() {
        let g = linspace(2.0e-3, 2.7e-3, 2001);
        assert_eq!(g.len(), 2001);
        assert_eq!(g[0], 2.0e-3);
        assert_eq!(g[2000], 2.7e-3);
        assert!(check_grid(&g, "theta").is_ok());
        assert_eq!(linspace(1.0f32, 2.0, 1), vec![1.0]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(check_grid::<f64>(&[], "x").is_err());
        assert!(check_grid(&[0.0, 1.0, 1.0], "x").is_err());
        assert!(check_grid(&[0.0, f64::NAN], "x").is_err());
        assert!(check_grid(&[2.0, 1.0], "x").is_err());
    }
}
