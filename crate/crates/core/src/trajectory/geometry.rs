use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::scalar::{lit, Real};

/// Loci with perpendicular RMS below this fraction of their extent count as
/// straight lines.
pub const COLLINEARITY_THRESHOLD: f64 = 1e-3;

/// `a − b` reduced to (−π/2, π/2].
pub fn angle_diff_mod_pi<T: Real>(a: T, b: T) -> T {
    let d = a - b;
    let mut r = d - T::PI() * (d / T::PI()).round();
    if r <= -T::FRAC_PI_2() {
        r += T::PI();
    }
    r
}

/// Total-least-squares line through a point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LineFit<T> {
    /// Centroid of the points.
    pub anchor: Complex<T>,
    /// Direction in radians, oriented from the first point toward the last.
    pub direction: T,
    /// RMS perpendicular distance.
    pub rms: T,
    /// Length of the projection of the points onto the line.
    pub extent: T,
}

impl<T: Real> LineFit<T> {
    pub fn unit(&self) -> Complex<T> {
        Complex::from_polar(T::one(), self.direction)
    }

    pub fn distance_to(&self, p: Complex<T>) -> T {
        let d = p - self.anchor;
        let u = self.unit();
        (d.im * u.re - d.re * u.im).abs()
    }

    pub fn is_collinear(&self) -> bool {
        self.rms < lit::<T>(COLLINEARITY_THRESHOLD) * self.extent
    }
}

fn centroid<T: Real>(points: &[Complex<T>]) -> Complex<T> {
    let n = T::from_usize(points.len()).unwrap_or_else(T::one);
    points
        .iter()
        .fold(Complex::new(T::zero(), T::zero()), |a, &p| a + p)
        / n
}

pub fn fit_line<T: Real>(points: &[Complex<T>]) -> Result<LineFit<T>> {
    if points.len() < 3 {
        return Err(Error::input(format!(
            "line fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|p| !(p.re.is_finite() && p.im.is_finite()))
    {
        return Err(Error::input("line fit points must be finite"));
    }
    let m = centroid(points);
    let (mut sxx, mut syy, mut sxy) = (T::zero(), T::zero(), T::zero());
    for p in points {
        let d = p - m;
        sxx += d.re * d.re;
        syy += d.im * d.im;
        sxy += d.re * d.im;
    }
    let scale = points.iter().fold(T::one(), |a, p| a.max(p.norm()));
    let spread = ((sxx + syy) / T::from_usize(points.len()).unwrap()).sqrt();
    if spread <= T::epsilon() * lit(16.0) * scale {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let mut direction = (lit::<T>(2.0) * sxy).atan2(sxx - syy) / lit(2.0);
    let mut u = Complex::from_polar(T::one(), direction);
    let along = |p: &Complex<T>, u: Complex<T>| ((p - m) * u.conj()).re;
    if along(&points[points.len() - 1], u) < along(&points[0], u) {
        direction = crate::scalar::wrap_phase(direction + T::PI());
        u = -u;
    }
    let (mut lo, mut hi, mut ss) = (T::infinity(), T::neg_infinity(), T::zero());
    for p in points {
        let d = (p - m) * u.conj();
        lo = lo.min(d.re);
        hi = hi.max(d.re);
        ss += d.im * d.im;
    }
    Ok(LineFit {
        anchor: m,
        direction,
        rms: (ss / T::from_usize(points.len()).unwrap()).sqrt(),
        extent: hi - lo,
    })
}

/// Algebraic circle through a point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ArcFit<T> {
    pub center: Complex<T>,
    pub radius: T,
    /// RMS of `|p − c| − r`.
    pub rms: T,
    /// Largest |p − c| − r relative to the radius.
    pub distortion: T,
}

/// Kåsa circle fit: minimizes Σ(|p − c|² − r²)² in closed form.
pub fn fit_arc<T: Real>(points: &[Complex<T>]) -> Result<ArcFit<T>> {
    if points.len() < 4 {
        return Err(Error::input(format!(
            "arc fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    let line = fit_line(points)?;
    if line.rms <= lit::<T>(1e-9) * line.extent {
        return Err(Error::Degenerate(
            "points are collinear; fit a line instead".into(),
        ));
    }
    // Centered and scaled for conditioning.
    let m = line.anchor;
    let s = line.extent;
    let mut ata = [T::zero(); 9];
    let mut atb = [T::zero(); 3];
    for p in points {
        let d = (p - m) / s;
        let row = [d.re, d.im, T::one()];
        let z = -(d.re * d.re + d.im * d.im);
        for r in 0..3 {
            atb[r] += row[r] * z;
            for c in 0..3 {
                ata[r * 3 + c] += row[r] * row[c];
            }
        }
    }
    let coef =
        solve(&ata, 3, &atb).ok_or_else(|| Error::Degenerate("circle fit is singular".into()))?;
    let two = lit::<T>(2.0);
    let c = Complex::new(-coef[0] / two, -coef[1] / two);
    let r2 = c.norm_sqr() - coef[2];
    if !(r2 > T::zero()) || !r2.is_finite() {
        return Err(Error::Degenerate("circle fit has no real radius".into()));
    }
    let center = m + c * s;
    let radius = r2.sqrt() * s;
    let (mut ss, mut worst) = (T::zero(), T::zero());
    for p in points {
        let dev = (p - center).norm() - radius;
        ss += dev * dev;
        worst = worst.max(dev.abs());
    }
    Ok(ArcFit {
        center,
        radius,
        rms: (ss / T::from_usize(points.len()).unwrap()).sqrt(),
        distortion: worst / radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn constructed_line() {
        let i = Complex::<f64>::i();
        let pts = [
            i,
            i + Complex::from_polar(0.5, -FRAC_PI_2),
            i + Complex::from_polar(1.0, -FRAC_PI_2),
        ];
        let l = fit_line(&pts).unwrap();
        assert!((l.direction + FRAC_PI_2).abs() < 1e-15);
        assert!(l.rms < 1e-15);
        assert!((l.extent - 1.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_is_not_a_line() {
        let pts = [
            Complex::new(0.0, 0.0),
            Complex::new(1.0, 0.0),
            Complex::new(0.3, 0.8),
        ];
        assert!(fit_line(&pts).unwrap().rms > 0.0);
        assert!(!fit_line(&pts).unwrap().is_collinear());
    }

    #[test]
    fn coincident_and_short_inputs() {
        let p = Complex::new(0.2, 0.1);
        assert!(matches!(fit_line(&[p, p, p]), Err(Error::Degenerate(_))));
        assert!(fit_line(&[p, p]).is_err());
    }

    #[test]
    fn circle_of_radius_two() {
        let c = Complex::new(0.5f64, -1.0);
        let pts: Vec<_> = [0.1, 1.2, 2.9, 4.4]
            .iter()
            .map(|&t| c + Complex::from_polar(2.0, t))
            .collect();
        let a = fit_arc(&pts).unwrap();
        assert!((a.radius - 2.0).abs() < 1e-12);
        assert!((a.center - c).norm() < 1e-12);
        assert!(a.rms < 1e-12 && a.distortion < 1e-12);
    }

    #[test]
    fn collinear_arc_input_is_degenerate() {
        let pts: Vec<_> = (0..5)
            .map(|k| Complex::new(k as f64, 2.0 * k as f64))
            .collect();
        assert!(matches!(fit_arc(&pts), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mod_pi_difference() {
        assert!(angle_diff_mod_pi(PI - 0.1, -0.1f64).abs() < 1e-15);
        assert!((angle_diff_mod_pi(0.3, 0.1f64) - 0.2).abs() < 1e-15);
        assert!(angle_diff_mod_pi(FRAC_PI_2, -FRAC_PI_2).abs() < 1e-15);
    }
}
