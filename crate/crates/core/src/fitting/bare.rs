use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{check_data, rms, weights};
use crate::error::{Error, Result};
use crate::model::{CavityParams, Regime};
use crate::optimize::{
    least_squares_minimize, Bounds, InitialGuess, LeastSquaresProblem, OptimizerConfig, Termination,
};
use crate::scalar::{lit, Real};

const MIN_POINTS: usize = 50;
/// Dips shallower than this fraction of the off-dip level are not identified.
const MIN_DIP_CONTRAST: f64 = 1e-3;
// Parameter units: θ in mrad, κ and κ_R in 10⁻²ω₀.
const THETA_UNIT: f64 = 1e-3;
const RATE_UNIT: f64 = 1e-2;

/// Phenomenological bare-cavity amplitude
/// `A·(−e^{iφ} + 2κ_R/(κ + iΔc))`.
pub fn bare_cavity_amplitude<T: Real>(
    theta: T,
    amplitude: T,
    phi: T,
    cavity: &CavityParams<T>,
) -> Result<Complex<T>> {
    let delta_c = crate::model::cavity_detuning(theta, cavity)?;
    let pole = Complex::new(lit::<T>(2.0) * cavity.kappa_r, T::zero())
        / Complex::new(cavity.kappa, delta_c);
    Ok((pole - Complex::from_polar(T::one(), phi)) * amplitude)
}

/// Bare-cavity model with absorption and dispersion corrections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BareCavityModel<T> {
    pub amplitude: T,
    pub phi: T,
    pub cavity: CavityParams<T>,
}

impl<T: Real> BareCavityModel<T> {
    pub fn amplitude_at(&self, theta: T) -> Result<Complex<T>> {
        bare_cavity_amplitude(theta, self.amplitude, self.phi, &self.cavity)
    }

    pub fn reflectivity(&self, theta: T) -> Result<T> {
        self.amplitude_at(theta).map(|r| r.norm_sqr())
    }

    pub fn scan(&self, theta_grid: &[T]) -> Result<Vec<T>> {
        theta_grid.iter().map(|&t| self.reflectivity(t)).collect()
    }

    /// The other parameter set with an identical |R|² curve.
    ///
    /// With `z = 2κ_R e^{−iφ}` the intensity only depends on `|κ + iΔc − z|`,
    /// so reflecting `z` about `Re z = κ` leaves every reflectivity unchanged
    /// while moving the cavity across critical coupling.
    pub fn mirror(&self) -> Self {
        let two = lit::<T>(2.0);
        let z = Complex::from_polar(two * self.cavity.kappa_r, -self.phi);
        let zm = Complex::new(two * self.cavity.kappa - z.re, z.im);
        let mut cavity = self.cavity;
        cavity.kappa_r = zm.norm() / two;
        Self {
            amplitude: self.amplitude,
            phi: -zm.arg(),
            cavity,
        }
    }
}

/// Fitted bare-cavity parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BareCavityFit<T> {
    #[serde(rename = "A")]
    pub a: T,
    /// Dispersion phase in radians.
    pub phi: T,
    /// Mode angle in mrad.
    pub theta_mode: T,
    /// κ in units of 10⁻²ω₀.
    pub kappa: T,
    /// κ_R in units of 10⁻²ω₀.
    pub kappa_r: T,
    /// One-sigma uncertainties in the order (A, φ, θ_mode, κ, κ_R).
    pub uncertainties: Option<Vec<T>>,
    pub residual_rms: T,
    pub regime: Regime,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
}

impl<T: Real> BareCavityFit<T> {
    pub fn cavity(&self) -> Result<CavityParams<T>> {
        CavityParams::new(
            self.theta_mode * lit(THETA_UNIT),
            self.kappa * lit(RATE_UNIT),
            self.kappa_r * lit(RATE_UNIT),
        )
    }

    pub fn model(&self) -> Result<BareCavityModel<T>> {
        Ok(BareCavityModel {
            amplitude: self.a,
            phi: self.phi,
            cavity: self.cavity()?,
        })
    }

    /// Parameters in fit units (A, φ, θ_mode, κ, κ_R).
    pub fn params(&self) -> [T; 5] {
        [self.a, self.phi, self.theta_mode, self.kappa, self.kappa_r]
    }
}

struct BareProblem<'a, T> {
    theta: &'a [T],
    data: &'a [T],
    weights: Vec<T>,
}

impl<T: Real> BareProblem<'_, T> {
    /// Amplitude `u = −e^{iφ} + c/(κ + iΔ)` and its pole term at one angle.
    fn terms(p: &[T], theta: T) -> (Complex<T>, Complex<T>, T) {
        let theta_mode = p[2] * lit(THETA_UNIT);
        let kappa = p[3] * lit(RATE_UNIT);
        let c = lit::<T>(2.0) * p[4] * lit(RATE_UNIT);
        let delta = theta_mode.sin() / theta.sin() - T::one();
        let inv = Complex::new(T::one(), T::zero()) / Complex::new(kappa, delta);
        let u = inv * c - Complex::from_polar(T::one(), p[1]);
        (u, inv, c)
    }
}

impl<T: Real> LeastSquaresProblem<T> for BareProblem<'_, T> {
    fn n_params(&self) -> usize {
        5
    }
    fn n_residuals(&self) -> usize {
        self.data.len()
    }
    fn residuals(&self, p: &[T], out: &mut [T]) {
        let a2 = p[0] * p[0];
        for (i, o) in out.iter_mut().enumerate() {
            let (u, _, _) = Self::terms(p, self.theta[i]);
            *o = (a2 * u.norm_sqr() - self.data[i]) * self.weights[i];
        }
    }
    fn jacobian(&self, p: &[T], jac: &mut [T]) -> bool {
        let two = lit::<T>(2.0);
        let a2 = p[0] * p[0];
        let theta_mode = p[2] * lit(THETA_UNIT);
        for i in 0..self.data.len() {
            let theta = self.theta[i];
            let (u, inv, c) = Self::terms(p, theta);
            let uc = u.conj();
            let d = |du: Complex<T>| two * a2 * (uc * du).re;
            let w = self.weights[i];
            let row = &mut jac[i * 5..(i + 1) * 5];
            row[0] = two * p[0] * u.norm_sqr() * w;
            row[1] = d(-Complex::<T>::i() * Complex::from_polar(T::one(), p[1])) * w;
            let dd = -Complex::<T>::i() * inv * inv * c;
            row[2] = d(dd * (theta_mode.cos() / theta.sin() * lit(THETA_UNIT))) * w;
            row[3] = d(-(inv * inv) * c * lit::<T>(RATE_UNIT)) * w;
            row[4] = d(inv * (two * lit(RATE_UNIT))) * w;
        }
        true
    }
}

fn detuning<T: Real>(theta_mode: T, theta: T) -> T {
    theta_mode.sin() / theta.sin() - T::one()
}

/// Linear crossing of `level` between grid points `i` and `j`.
fn crossing<T: Real>(theta: &[T], data: &[T], i: usize, j: usize, level: T) -> T {
    let (y0, y1) = (data[i], data[j]);
    if y1 == y0 {
        return theta[j];
    }
    theta[i] + (theta[j] - theta[i]) * (level - y0) / (y1 - y0)
}

fn guess_for<T: Real>(theta: &[T], data: &[T], regime: Regime) -> Result<Vec<T>> {
    let n = data.len();
    let (imin, &dmin) = data
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .ok_or_else(|| Error::input("empty scan"))?;
    let level = data.iter().fold(T::zero(), |m, &v| m.max(v));
    let no_dip = || {
        Error::Degenerate(
            "no identifiable mode dip in the rocking curve; widen the angular scan around the mode"
                .into(),
        )
    };
    if !(level > T::zero()) || (level - dmin) <= level * lit(MIN_DIP_CONTRAST) {
        return Err(no_dip());
    }
    if imin == 0 || imin == n - 1 {
        return Err(no_dip());
    }

    // Parabolic refinement of the dip position.
    let (t0, t1, t2) = (theta[imin - 1], theta[imin], theta[imin + 1]);
    let (y0, y1, y2) = (data[imin - 1], data[imin], data[imin + 1]);
    let denom = (t0 - t1) * (t0 - t2) * (t1 - t2);
    let mut theta_mode = t1;
    if denom != T::zero() {
        let a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom;
        let b = (t2 * t2 * (y0 - y1) + t1 * t1 * (y2 - y0) + t0 * t0 * (y1 - y2)) / denom;
        if a > T::zero() {
            let v = -b / (lit::<T>(2.0) * a);
            if v > t0 && v < t2 {
                theta_mode = v;
            }
        }
    }

    let half = (level + dmin) / lit(2.0);
    let left = (0..imin).rev().find(|&i| data[i] >= half);
    let right = (imin + 1..n).find(|&i| data[i] >= half);
    let left = left.map(|i| crossing(theta, data, i, i + 1, half));
    let right = right.map(|i| crossing(theta, data, i - 1, i, half));
    // Half-depth crossings sit at Δc = ±κ.
    let kappa = match (left, right) {
        (Some(l), Some(r)) => (detuning(theta_mode, l) - detuning(theta_mode, r)) / lit(2.0),
        (Some(l), None) => detuning(theta_mode, l),
        (None, Some(r)) => -detuning(theta_mode, r),
        (None, None) => return Err(no_dip()),
    };
    if !(kappa > T::zero()) {
        return Err(no_dip());
    }
    // At Δc = 0 with φ = 0, |R|²/A² = (1 − 2κ_R/κ)².
    let root = (dmin / level).sqrt();
    let c = match regime {
        Regime::Undercritical => kappa * (T::one() - root),
        _ => kappa * (T::one() + root),
    };
    let c = c.max(kappa * lit(1e-3));
    Ok(vec![
        level.sqrt().min(lit(1.2)),
        T::zero(),
        theta_mode / lit(THETA_UNIT),
        kappa / lit(RATE_UNIT),
        c / lit::<T>(2.0 * RATE_UNIT),
    ])
}

/// Heuristic start (A, φ, θ_mode [mrad], κ, κ_R [10⁻²ω₀]) read off the
/// rocking curve. κ_R takes the overcritical root of the dip depth.
pub fn initial_guess_bare<T: Real>(theta_grid: &[T], data: &[T]) -> Result<Vec<T>> {
    check_data(theta_grid, data, 5)?;
    guess_for(theta_grid, data, Regime::Overcritical)
}

fn physical_bounds<T: Real>(theta_grid: &[T]) -> Bounds<T> {
    let first = theta_grid[0] / lit(THETA_UNIT);
    let last = theta_grid[theta_grid.len() - 1] / lit(THETA_UNIT);
    let tiny = lit::<T>(1e-9);
    Bounds {
        lower: vec![tiny, -T::PI(), first, tiny, tiny],
        upper: vec![lit(1.2), T::PI(), last, lit(1e3), lit(1e3)],
    }
}

/// Fits the bare-cavity model to a rocking curve |R(θ)|².
///
/// Intensity data determine the cavity only up to [`BareCavityModel::mirror`],
/// which swaps the coupling regime. `regime` picks the branch; without it the
/// branch with the smaller |φ| is reported and a diagnostic is attached.
///
/// A scan without an identifiable dip still returns a result, flagged as not
/// converged.
pub fn fit_bare_cavity<T: Real>(
    theta_grid: &[T],
    data: &[T],
    regime: Option<Regime>,
    config: &OptimizerConfig<T>,
) -> Result<BareCavityFit<T>> {
    check_data(theta_grid, data, MIN_POINTS)?;
    config.validate()?;
    let mut diagnostics = Vec::new();
    let mut dip_found = true;
    let start = match &config.initial_guess {
        InitialGuess::Explicit(v) if v.len() == 5 => v.clone(),
        InitialGuess::Explicit(v) => {
            return Err(Error::input(format!(
                "bare-cavity start needs 5 values, got {}",
                v.len()
            )))
        }
        InitialGuess::Heuristic => {
            match guess_for(theta_grid, data, regime.unwrap_or(Regime::Overcritical)) {
                Ok(g) => g,
                Err(Error::Degenerate(msg)) => {
                    dip_found = false;
                    diagnostics.push(msg);
                    let n = theta_grid.len();
                    let span = detuning(theta_grid[n / 2], theta_grid[0]);
                    let mean = data.iter().copied().sum::<T>() / T::from_usize(n).unwrap();
                    vec![
                        mean.sqrt().min(lit(1.2)).max(lit(1e-6)),
                        T::zero(),
                        theta_grid[n / 2] / lit(THETA_UNIT),
                        span / lit(4.0 * RATE_UNIT),
                        span / lit(8.0 * RATE_UNIT),
                    ]
                }
                Err(e) => return Err(e),
            }
        }
    };
    let bounds = config
        .bounds
        .clone()
        .unwrap_or_else(|| physical_bounds(theta_grid));
    if bounds.len() != 5 {
        return Err(Error::input("bare-cavity bounds need 5 entries"));
    }
    let problem = BareProblem {
        theta: theta_grid,
        data,
        weights: weights(data, config.weighting),
    };
    let mut min = least_squares_minimize(&problem, &start, Some(&bounds), config)?;

    let as_fit = |p: &[T]| -> Result<BareCavityModel<T>> {
        Ok(BareCavityModel {
            amplitude: p[0],
            phi: p[1],
            cavity: CavityParams::new(
                p[2] * lit(THETA_UNIT),
                p[3] * lit(RATE_UNIT),
                p[4] * lit(RATE_UNIT),
            )?,
        })
    };
    let fitted = as_fit(&min.params)?;
    let mirrored = fitted.mirror();
    let swap = match regime {
        Some(want) => fitted.cavity.regime() != want && mirrored.cavity.regime() == want,
        None => {
            diagnostics.push(
                "coupling regime is not identifiable from intensity alone; \
                 the branch with the smaller dispersion phase is reported"
                    .into(),
            );
            mirrored.phi.abs() < fitted.phi.abs()
        }
    };
    if swap {
        let p = vec![
            mirrored.amplitude,
            mirrored.phi,
            min.params[2],
            min.params[3],
            mirrored.cavity.kappa_r / lit(RATE_UNIT),
        ];
        // Already optimal; the pass refreshes the curvature on this branch.
        let polish = OptimizerConfig {
            restart_on_stall: false,
            ..config.clone()
        };
        let again = least_squares_minimize(&problem, &p, Some(&bounds), &polish)?;
        min = crate::optimize::Minimum {
            iterations: min.iterations + again.iterations,
            evaluations: min.evaluations + again.evaluations,
            restarted: min.restarted || again.restarted,
            ..again
        };
    }
    let model = as_fit(&min.params)?;
    let fitted_curve = model.scan(theta_grid)?;
    let residual_rms = rms(fitted_curve.iter().zip(data).map(|(&f, &d)| f - d));
    let converged = min.converged() && dip_found;
    if !min.converged() {
        diagnostics.push(format!("optimizer stopped: {}", min.termination));
    }
    let p = &min.params;
    Ok(BareCavityFit {
        a: p[0],
        phi: p[1],
        theta_mode: p[2],
        kappa: p[3],
        kappa_r: p[4],
        uncertainties: min.uncertainties(data.len()),
        residual_rms,
        regime: model.cavity.regime(),
        converged,
        termination: min.termination,
        iterations: min.iterations,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::linspace;

    fn table_over() -> BareCavityModel<f64> {
        BareCavityModel {
            amplitude: 0.77,
            phi: -0.02,
            cavity: CavityParams::table_overcritical(),
        }
    }

    fn table_under() -> BareCavityModel<f64> {
        BareCavityModel {
            amplitude: 0.94,
            phi: 0.038,
            cavity: CavityParams::table_undercritical(),
        }
    }

    fn grid() -> Vec<f64> {
        linspace(2.0e-3, 2.7e-3, 701)
    }

    fn assert_recovers(truth: &BareCavityModel<f64>, fit: &BareCavityFit<f64>) {
        let want = [
            truth.amplitude,
            truth.phi,
            truth.cavity.theta_mode * 1e3,
            truth.cavity.kappa * 1e2,
            truth.cavity.kappa_r * 1e2,
        ];
        for (got, want) in fit.params().iter().zip(want) {
            assert!(((got - want) / want).abs() < 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn mirror_is_intensity_equivalent_and_involutive() {
        for m in [table_over(), table_under()] {
            let mm = m.mirror();
            assert_ne!(m.cavity.regime(), mm.cavity.regime());
            for t in grid() {
                let (a, b) = (m.reflectivity(t).unwrap(), mm.reflectivity(t).unwrap());
                assert!((a - b).abs() < 1e-13);
            }
            let back = mm.mirror();
            assert!((back.phi - m.phi).abs() < 1e-12);
            assert!((back.cavity.kappa_r - m.cavity.kappa_r).abs() < 1e-15);
        }
    }

    #[test]
    fn overcritical_round_trip() {
        let truth = table_over();
        let g = grid();
        let data = truth.scan(&g).unwrap();
        let fit =
            fit_bare_cavity(&g, &data, Some(Regime::Overcritical), &Default::default()).unwrap();
        assert!(fit.converged, "{:?}", fit.diagnostics);
        assert_recovers(&truth, &fit);
        assert_eq!(fit.regime, Regime::Overcritical);
    }

    #[test]
    fn undercritical_round_trip() {
        let truth = table_under();
        let g = grid();
        let data = truth.scan(&g).unwrap();
        let fit =
            fit_bare_cavity(&g, &data, Some(Regime::Undercritical), &Default::default()).unwrap();
        assert!(fit.converged, "{:?}", fit.diagnostics);
        assert_recovers(&truth, &fit);
        assert_eq!(fit.regime, Regime::Undercritical);
    }

    #[test]
    fn flat_input_is_not_converged() {
        let g = grid();
        let data = vec![0.6; g.len()];
        let fit = fit_bare_cavity(&g, &data, None, &Default::default()).unwrap();
        assert!(!fit.converged);
        assert!(!fit.diagnostics.is_empty());
        assert!(initial_guess_bare(&g, &data).is_err());
    }

    #[test]
    fn initial_guess_lands_near_truth() {
        let truth = table_over();
        let g = grid();
        let data = truth.scan(&g).unwrap();
        let s = initial_guess_bare(&g, &data).unwrap();
        assert!((s[2] - 2.338).abs() < 0.01);
        assert!((s[3] / 1.938 - 1.0).abs() < 0.3);
        assert!((s[4] / 1.667 - 1.0).abs() < 0.3);
        assert!((s[0] / 0.77 - 1.0).abs() < 0.1);
    }

    #[test]
    fn input_validation() {
        let g = linspace(2.0e-3, 2.7e-3, 20);
        let d = vec![0.5; 20];
        assert!(fit_bare_cavity(&g, &d, None, &Default::default()).is_err());
        let g = grid();
        let mut d = table_over().scan(&g).unwrap();
        d[3] = -0.1;
        assert!(fit_bare_cavity(&g, &d, None, &Default::default()).is_err());
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let g = grid();
        let data = table_under().scan(&g).unwrap();
        let prob = BareProblem {
            theta: &g,
            data: &data,
            weights: vec![1.0; g.len()],
        };
        let p: [f64; 5] = [0.9, 0.05, 2.33, 0.8, 0.3];
        let mut jac = vec![0.0; g.len() * 5];
        prob.jacobian(&p, &mut jac);
        let (mut rp, mut rm) = (vec![0.0; g.len()], vec![0.0; g.len()]);
        for j in 0..5 {
            let h = 1e-6;
            let mut q = p;
            q[j] += h;
            prob.residuals(&q, &mut rp);
            q[j] -= 2.0 * h;
            prob.residuals(&q, &mut rm);
            for i in (0..g.len()).step_by(37) {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                assert!(
                    (fd - jac[i * 5 + j]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{i},{j}"
                );
            }
        }
    }
}
