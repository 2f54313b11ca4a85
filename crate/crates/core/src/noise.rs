//! Seeded synthetic noise for robustness studies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `y·(1 + σ·n)` with n standard normal, drawn from a ChaCha8 stream seeded
/// with `seed`. The same seed always gives the same sequence.
pub fn multiplicative_gaussian<T: Real>(data: &[T], sigma: T, seed: u64) -> Result<Vec<T>> {
    let s = sigma.to_f64().unwrap_or(f64::NAN);
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::input(format!(
            "noise level must be finite and non-negative, got {sigma}"
        )));
    }
    let normal =
        Normal::new(0.0, s).map_err(|e| Error::input(format!("noise level {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(data
        .iter()
        .map(|&y| y * (T::one() + T::from_f64(normal.sample(&mut rng)).unwrap()))
        .collect())
}
