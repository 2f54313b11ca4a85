//! Sweeps of the complex asymmetry parameter over isotope abundance and
//! grazing angle, with line and circle geometry of the resulting loci.

mod export;
mod geometry;
mod oracle;

pub use export::{fmt_num, surface_csv, trajectory_csv};
pub use geometry::{angle_diff_mod_pi, fit_arc, fit_line, ArcFit, LineFit, COLLINEARITY_THRESHOLD};
pub use oracle::{calibrate_n_ref, OracleSetup, CALIBRATION_OFFSET, ORACLE_WINDOW_HALF_WIDTH};

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::check_grid;
use crate::model::{cavity_detuning, coupling_factor, CavityParams, FanoProfile, NuclearEnsemble};
use crate::scalar::{lit, Real};

/// Default abundance grid.
pub const DEFAULT_ABUNDANCES: [f64; 5] = [1.0, 0.7, 0.5, 0.3, 0.1];
/// Default angle offsets from the mode: −50 … +46 µrad in 4 µrad steps.
pub const DEFAULT_OFFSET_START: f64 = -50e-6;
pub const DEFAULT_OFFSET_STEP: f64 = 4e-6;
pub const DEFAULT_OFFSET_POINTS: usize = 25;
/// Sweep angles must satisfy |Δc| ≤ this many κ.
pub const VALIDITY_WINDOW_KAPPAS: f64 = 10.0;

pub fn default_offsets<T: Real>() -> Vec<T> {
    (0..DEFAULT_OFFSET_POINTS)
        .map(|i| lit::<T>(DEFAULT_OFFSET_START + DEFAULT_OFFSET_STEP * i as f64))
        .collect()
}

/// Where q values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceTag {
    #[serde(rename = "model")]
    Model,
    #[serde(rename = "oracle+fit")]
    OracleFit,
}

impl std::fmt::Display for SourceTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SourceTag::Model => "model",
            SourceTag::OracleFit => "oracle+fit",
        })
    }
}

/// Producer of q at a (θ, abundance) pair.
#[derive(Debug, Clone)]
pub enum QSource<T> {
    /// Closed-form model.
    Model {
        cavity: CavityParams<T>,
        ensemble: NuclearEnsemble<T>,
    },
    /// Multilayer energy scan followed by a Fano fit.
    Oracle(Box<OracleSetup<T>>),
}

impl<T: Real> QSource<T> {
    pub fn tag(&self) -> SourceTag {
        match self {
            QSource::Model { .. } => SourceTag::Model,
            QSource::Oracle(_) => SourceTag::OracleFit,
        }
    }

    /// Cavity used to interpret angles (fitted, for the oracle).
    pub fn cavity(&self) -> &CavityParams<T> {
        match self {
            QSource::Model { cavity, .. } => cavity,
            QSource::Oracle(o) => &o.cavity,
        }
    }

    /// q and Π at one point.
    pub fn evaluate(&self, theta: T, abundance: T) -> Result<(Complex<T>, T)> {
        match self {
            QSource::Model { cavity, ensemble } => {
                let p = FanoProfile::at(theta, cavity, &ensemble.with_abundance(abundance)?)?;
                Ok((p.q, p.pi_strength))
            }
            QSource::Oracle(o) => {
                let fit = o.fit_point(theta, abundance)?;
                if !fit.converged {
                    return Err(Error::Fit(format!(
                        "Fano fit did not converge ({})",
                        fit.termination
                    )));
                }
                Ok((fit.q, fit.pi_strength))
            }
        }
    }

    fn check_theta(&self, theta: T) -> Result<()> {
        let cavity = self.cavity();
        let delta_c = cavity_detuning(theta, cavity)?;
        if delta_c.abs() > lit::<T>(VALIDITY_WINDOW_KAPPAS) * cavity.kappa {
            return Err(Error::domain(format!(
                "angle {theta} rad is {} cavity widths from the mode (limit {VALIDITY_WINDOW_KAPPAS})",
                delta_c.abs() / cavity.kappa
            )));
        }
        coupling_factor(delta_c, cavity).map(|_| ())
    }
}

/// One sweep point. Failed points keep their place with `ok = false` and NaN
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct QPoint<T> {
    pub control: T,
    pub q: Complex<T>,
    pub pi_strength: T,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl<T: Real> QPoint<T> {
    fn from_result(control: T, r: Result<(Complex<T>, T)>) -> Self {
        match r {
            Ok((q, pi)) if q.re.is_finite() && q.im.is_finite() && pi.is_finite() => Self {
                control,
                q,
                pi_strength: pi,
                ok: true,
                error: None,
            },
            Ok(_) => Self::failed(control, "non-finite result".into()),
            Err(e) => Self::failed(control, e.to_string()),
        }
    }

    fn failed(control: T, error: String) -> Self {
        Self {
            control,
            q: Complex::new(T::nan(), T::nan()),
            pi_strength: T::nan(),
            ok: false,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Abundance,
    Angle,
}

/// A q locus in sweep order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct QTrajectory<T> {
    pub mode: SweepMode,
    pub source: SourceTag,
    /// Grazing angle (abundance sweeps) or abundance (angle sweeps).
    pub fixed: T,
    /// Mode angle of the cavity the angles refer to.
    pub theta_mode: T,
    /// Controls are abundances, or grazing angles in radians.
    pub points: Vec<QPoint<T>>,
}

impl<T: Real> QTrajectory<T> {
    pub fn ok_points(&self) -> Vec<Complex<T>> {
        self.points.iter().filter(|p| p.ok).map(|p| p.q).collect()
    }

    pub fn ok_fraction(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().filter(|p| p.ok).count() as f64 / self.points.len() as f64
    }
}

fn check_sorted<T: Real>(grid: &[T], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid(format!("{what} grid is empty")));
    }
    let increasing = grid.windows(2).all(|w| w[1] > w[0]);
    let decreasing = grid.windows(2).all(|w| w[1] < w[0]);
    if grid.iter().any(|v| !v.is_finite()) || !(increasing || decreasing) {
        return Err(Error::InvalidGrid(format!(
            "{what} grid must be finite and strictly monotone"
        )));
    }
    Ok(())
}

/// q versus isotope abundance at fixed grazing angle. Points run in the
/// order of `abundances` (any strictly monotone order).
pub fn sweep_abundance<T: Real>(
    theta: T,
    abundances: &[T],
    source: &QSource<T>,
) -> Result<QTrajectory<T>> {
    check_sorted(abundances, "abundance")?;
    if abundances.iter().any(|&a| a < T::zero() || a > T::one()) {
        return Err(Error::domain("abundances must lie in [0, 1]"));
    }
    source.check_theta(theta)?;
    let points = abundances
        .par_iter()
        .map(|&a| QPoint::from_result(a, source.evaluate(theta, a)))
        .collect();
    Ok(QTrajectory {
        mode: SweepMode::Abundance,
        source: source.tag(),
        fixed: theta,
        theta_mode: source.cavity().theta_mode,
        points,
    })
}

/// q versus grazing angle (radians) at fixed abundance.
pub fn sweep_angle<T: Real>(
    abundance: T,
    thetas: &[T],
    source: &QSource<T>,
) -> Result<QTrajectory<T>> {
    check_grid(thetas, "angle")?;
    if !(abundance >= T::zero() && abundance <= T::one()) {
        return Err(Error::domain("abundance must lie in [0, 1]"));
    }
    for &t in thetas {
        source.check_theta(t)?;
    }
    let points = thetas
        .par_iter()
        .map(|&t| QPoint::from_result(t, source.evaluate(t, abundance)))
        .collect();
    Ok(QTrajectory {
        mode: SweepMode::Angle,
        source: source.tag(),
        fixed: abundance,
        theta_mode: source.cavity().theta_mode,
        points,
    })
}

/// Angles `θ_mode + offset` for the given offsets.
pub fn angles_from_offsets<T: Real>(cavity: &CavityParams<T>, offsets: &[T]) -> Vec<T> {
    offsets.iter().map(|&d| cavity.theta_mode + d).collect()
}

/// One cell of a q surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct QCell<T> {
    pub theta: T,
    pub abundance: T,
    pub q: Complex<T>,
    pub pi_strength: T,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Full factorial (θ × abundance) evaluation in long form, θ-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct QSurface<T> {
    pub source: SourceTag,
    pub theta_mode: T,
    pub thetas: Vec<T>,
    pub abundances: Vec<T>,
    pub cells: Vec<QCell<T>>,
}

impl<T: Real> QSurface<T> {
    pub fn cell(&self, i_theta: usize, i_abundance: usize) -> &QCell<T> {
        &self.cells[i_theta * self.abundances.len() + i_abundance]
    }
}

pub fn q_surface<T: Real>(
    thetas: &[T],
    abundances: &[T],
    source: &QSource<T>,
) -> Result<QSurface<T>> {
    check_grid(thetas, "angle")?;
    check_sorted(abundances, "abundance")?;
    if abundances.iter().any(|&a| a < T::zero() || a > T::one()) {
        return Err(Error::domain("abundances must lie in [0, 1]"));
    }
    let pairs: Vec<(T, T)> = thetas
        .iter()
        .flat_map(|&t| abundances.iter().map(move |&a| (t, a)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(theta, abundance)| {
            let r = source
                .check_theta(theta)
                .and_then(|_| source.evaluate(theta, abundance));
            let p = QPoint::from_result(abundance, r);
            QCell {
                theta,
                abundance,
                q: p.q,
                pi_strength: p.pi_strength,
                ok: p.ok,
                error: p.error,
            }
        })
        .collect();
    Ok(QSurface {
        source: source.tag(),
        theta_mode: source.cavity().theta_mode,
        thetas: thetas.to_vec(),
        abundances: abundances.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{relative_phase, NuclearEnsemble};

    fn model(c: CavityParams<f64>) -> QSource<f64> {
        QSource::Model {
            cavity: c,
            ensemble: NuclearEnsemble::fe57(&c, 100.0).unwrap(),
        }
    }

    #[test]
    fn zero_abundance_is_q_equals_i() {
        let src = model(CavityParams::table_overcritical());
        let t = sweep_abundance(2.38e-3, &[1.0, 0.5, 0.0], &src).unwrap();
        let last = &t.points[2];
        assert!((last.q - Complex::i()).norm() < 1e-10);
        assert_eq!(last.pi_strength, 0.0);
    }

    #[test]
    fn model_abundance_sweep_is_a_line_along_phi() {
        for c in [
            CavityParams::table_overcritical(),
            CavityParams::table_undercritical(),
        ] {
            let src = model(c);
            let theta = c.theta_mode + 42e-6;
            let t = sweep_abundance(theta, &DEFAULT_ABUNDANCES, &src).unwrap();
            let pis: Vec<f64> = t.points.iter().map(|p| p.pi_strength).collect();
            assert!(pis.windows(2).all(|w| w[1] < w[0]));
            let line = fit_line(&t.ok_points()).unwrap();
            assert!(line.rms < 1e-10);
            assert!(line.distance_to(Complex::i()) < 1e-10);
            let phi = relative_phase(cavity_detuning(theta, &c).unwrap(), &c).unwrap();
            assert!(angle_diff_mod_pi(line.direction, phi).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_out_of_window_and_bad_grids() {
        let c = CavityParams::table_overcritical();
        let src = model(c);
        assert!(sweep_abundance(3.0e-3, &DEFAULT_ABUNDANCES, &src).is_err());
        assert!(sweep_abundance(2.38e-3, &[], &src).is_err());
        assert!(sweep_abundance(2.38e-3, &[0.5, 0.7, 0.6], &src).is_err());
        assert!(sweep_angle(1.0, &[2.3e-3, 2.2e-3], &src).is_err());
    }

    #[test]
    fn surface_with_zero_abundance_row() {
        let c = CavityParams::table_undercritical();
        let src = model(c);
        let thetas = angles_from_offsets(&c, &default_offsets::<f64>());
        let s = q_surface(&thetas, &[0.0, 0.5, 1.0], &src).unwrap();
        assert_eq!(s.cells.len(), thetas.len() * 3);
        for (i, &theta) in thetas.iter().enumerate() {
            let cell = s.cell(i, 0);
            assert_eq!(cell.q.re, 0.0);
            assert_eq!(cell.q.im, 1.0);
            assert_eq!(cell.theta, theta);
        }
    }

    #[test]
    fn default_offsets_skip_zero() {
        let o = default_offsets::<f64>();
        assert_eq!(o.len(), 25);
        assert!((o[0] + 50e-6).abs() < 1e-18 && (o[24] - 46e-6).abs() < 1e-18);
        assert!(o.iter().all(|v| v.abs() > 1e-7));
    }
}
