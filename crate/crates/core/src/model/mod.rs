//! Closed-form phenomenological model of a thin-film cavity with an embedded
//! ensemble of Mössbauer nuclei.
//!
//! Energies and rates are expressed in units of the nuclear transition energy
//! ω₀ (so a cavity decay rate of `1.938e-2` means 1.938×10⁻²ω₀). Probe energies
//! are always carried as the offset `ω − ω₀`, never as absolute energies, so
//! that neV-scale structure survives on top of a 14.4 keV carrier.

mod spectrum;

pub use spectrum::{fano_lineshape, reflectivity_spectrum, FanoProfile};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, wrap_phase, Real};

/// Transition energy of ⁵⁷Fe in keV.
pub const FE57_TRANSITION_KEV: f64 = 14.4125;
/// Natural linewidth of the ⁵⁷Fe 14.4 keV line (4.66 neV) in units of ω₀.
pub const FE57_LINEWIDTH: f64 = 4.66e-9 / 14.4125e3;
/// Default cavity–nucleus coupling constant, in units of the natural linewidth.
pub const DEFAULT_COUPLING_IN_GAMMA: f64 = 1.0e3;
/// Default collective enhancement NΓs/γ at full abundance on the mode.
pub const DEFAULT_SUPERRADIANCE: f64 = 100.0;
/// Relative tolerance used by [`CavityParams::regime`].
pub const DEFAULT_REGIME_TOL: f64 = 1e-9;

/// Bare-cavity parameters of a single guided mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CavityParams<T> {
    /// Mode angle θ_th in radians.
    pub theta_mode: T,
    /// Cavity decay rate κ (units of ω₀).
    pub kappa: T,
    /// In-coupling strength κ_R (units of ω₀).
    pub kappa_r: T,
    /// Nuclear transition energy ω₀ in keV.
    pub omega0_kev: T,
}

impl<T: Real> CavityParams<T> {
    pub fn new(theta_mode: T, kappa: T, kappa_r: T) -> Result<Self> {
        let cavity = Self {
            theta_mode,
            kappa,
            kappa_r,
            omega0_kev: lit(FE57_TRANSITION_KEV),
        };
        cavity.validate()?;
        Ok(cavity)
    }

    /// Fitted Pt cavity (overcritical) from the reference parameter table.
    pub fn table_overcritical() -> Self {
        Self::new(lit(2.338e-3), lit(1.938e-2), lit(1.667e-2)).expect("valid preset")
    }

    /// Fitted Pd cavity (undercritical) from the reference parameter table.
    pub fn table_undercritical() -> Self {
        Self::new(lit(2.320e-3), lit(0.7391e-2), lit(0.2711e-2)).expect("valid preset")
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: T| x.is_finite() && x > T::zero();
        if !ok(self.kappa) || !ok(self.kappa_r) {
            return Err(Error::domain(format!(
                "cavity rates must be positive and finite (kappa = {}, kappa_r = {})",
                self.kappa, self.kappa_r
            )));
        }
        if !ok(self.theta_mode) || self.theta_mode >= T::FRAC_PI_2() {
            return Err(Error::domain(format!(
                "mode angle {} rad outside (0, pi/2)",
                self.theta_mode
            )));
        }
        if !ok(self.omega0_kev) {
            return Err(Error::domain("transition energy must be positive"));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self, lit(DEFAULT_REGIME_TOL))
    }

    /// `2κ_R − κ`, the signed distance from critical coupling.
    pub fn coupling_imbalance(&self) -> T {
        lit::<T>(2.0) * self.kappa_r - self.kappa
    }
}

/// Coupling regime of the cavity, set by the sign of `2κ_R − κ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Overcritical,
    Critical,
    Undercritical,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Overcritical => "overcritical",
            Regime::Critical => "critical",
            Regime::Undercritical => "undercritical",
        })
    }
}

/// Nuclear ensemble coupled to the cavity mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NuclearEnsemble<T> {
    /// Natural linewidth γ (units of ω₀).
    pub gamma: T,
    /// Cavity–nucleus coupling constant g (units of ω₀).
    pub g: T,
    /// Effective number of nuclei at full abundance.
    pub n_ref: T,
    /// Resonant isotope fraction in [0, 1].
    pub abundance: T,
}

impl<T: Real> NuclearEnsemble<T> {
    pub fn new(gamma: T, g: T, n_ref: T, abundance: T) -> Result<Self> {
        let ens = Self {
            gamma,
            g,
            n_ref,
            abundance,
        };
        ens.validate()?;
        Ok(ens)
    }

    /// ⁵⁷Fe ensemble whose on-mode collective width at full abundance is
    /// `superradiance` natural linewidths in the given cavity.
    pub fn fe57(cavity: &CavityParams<T>, superradiance: T) -> Result<Self> {
        let gamma: T = lit(FE57_LINEWIDTH);
        let g = gamma * lit(DEFAULT_COUPLING_IN_GAMMA);
        let per_atom = single_atom_width(T::zero(), cavity, g)?;
        Self::new(gamma, g, superradiance * gamma / per_atom, T::one())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > T::zero()) {
            return Err(Error::domain("natural linewidth must be positive"));
        }
        if !(self.g.is_finite() && self.g >= T::zero()) {
            return Err(Error::domain("coupling constant must be non-negative"));
        }
        if !(self.n_ref.is_finite() && self.n_ref > T::zero()) {
            return Err(Error::domain("reference nuclear number must be positive"));
        }
        if !(self.abundance >= T::zero() && self.abundance <= T::one()) {
            return Err(Error::domain(format!(
                "abundance {} outside [0, 1]",
                self.abundance
            )));
        }
        Ok(())
    }

    pub fn with_abundance(&self, abundance: T) -> Result<Self> {
        Self::new(self.gamma, self.g, self.n_ref, abundance)
    }

    /// Effective nuclear number N = n_ref · abundance.
    pub fn effective_number(&self) -> T {
        self.n_ref * self.abundance
    }
}

/// Angle/energy coordinates of a single probe point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DetuningState<T> {
    pub theta: T,
    /// Cavity detuning Δc (units of ω₀).
    pub delta_c: T,
    /// Dimensionless energy ε scaled by the collective width.
    pub epsilon: T,
    /// Probe energy offset ω − ω₀ (units of ω₀).
    pub omega: T,
}

impl<T: Real> DetuningState<T> {
    pub fn new(
        theta: T,
        omega: T,
        cavity: &CavityParams<T>,
        ensemble: &NuclearEnsemble<T>,
    ) -> Result<Self> {
        let delta_c = cavity_detuning(theta, cavity)?;
        let gamma_s = single_atom_width(delta_c, cavity, ensemble.g)?;
        let n = ensemble.effective_number();
        let shift = lamb_shift(delta_c, gamma_s, n, cavity)?;
        let width = n * gamma_s + ensemble.gamma;
        Ok(Self {
            theta,
            delta_c,
            epsilon: lit::<T>(2.0) * (omega + shift) / width,
            omega,
        })
    }
}

/// Cavity detuning Δc = (sin θ_th / sin θ − 1)·ω₀, in units of ω₀.
pub fn cavity_detuning<T: Real>(theta: T, cavity: &CavityParams<T>) -> Result<T> {
    if !(theta.is_finite() && theta > T::zero() && theta < T::FRAC_PI_2()) {
        return Err(Error::domain(format!(
            "grazing angle {theta} rad outside (0, pi/2)"
        )));
    }
    if theta == cavity.theta_mode {
        return Ok(T::zero());
    }
    Ok(cavity.theta_mode.sin() / theta.sin() - T::one())
}

/// Classifies the cavity by comparing `2κ_R − κ` against `tol·κ`.
pub fn classify_regime<T: Real>(cavity: &CavityParams<T>, tol: T) -> Regime {
    let imbalance = cavity.coupling_imbalance();
    let band = tol.abs() * cavity.kappa;
    if imbalance > band {
        Regime::Overcritical
    } else if -imbalance > band {
        Regime::Undercritical
    } else {
        Regime::Critical
    }
}

/// Single-nucleus broadening Γs = 2g² / (κ + Δc²/κ).
pub fn single_atom_width<T: Real>(delta_c: T, cavity: &CavityParams<T>, g: T) -> Result<T> {
    let kappa = cavity.kappa;
    if kappa == T::zero() {
        return Err(Error::singular("single-atom width undefined for kappa = 0"));
    }
    Ok(lit::<T>(2.0) * g * g * kappa / (kappa * kappa + delta_c * delta_c))
}

/// Collective resonant strength Π = NΓs / (NΓs + γ).
pub fn collective_strength<T: Real>(ensemble: &NuclearEnsemble<T>, gamma_s: T) -> T {
    let collective = ensemble.effective_number() * gamma_s;
    collective / (collective + ensemble.gamma)
}

fn check_pole<T: Real>(delta_c: T, cavity: &CavityParams<T>) -> Result<()> {
    if delta_c == T::zero() && cavity.coupling_imbalance() == T::zero() {
        return Err(Error::singular(
            "critical coupling at zero detuning is a pole of the relative amplitude",
        ));
    }
    Ok(())
}

/// Relative amplitude r_E of the nuclear pathway.
pub fn relative_amplitude<T: Real>(delta_c: T, cavity: &CavityParams<T>) -> Result<T> {
    check_pole(delta_c, cavity)?;
    let (k, a, d2) = (cavity.kappa, cavity.coupling_imbalance(), delta_c * delta_c);
    Ok(lit::<T>(2.0) * cavity.kappa_r / k * ((k * k + d2) / (a * a + d2)).sqrt())
}

/// Relative phase φ_E = arg(κ − iΔc) + arg(2κ_R − κ + iΔc) − π/2, on (−π, π].
pub fn relative_phase<T: Real>(delta_c: T, cavity: &CavityParams<T>) -> Result<T> {
    check_pole(delta_c, cavity)?;
    let first = (-delta_c).atan2(cavity.kappa);
    let second = delta_c.atan2(cavity.coupling_imbalance());
    Ok(wrap_phase(first + second - T::FRAC_PI_2()))
}

/// The complex coupling factor r_E·e^{iφ_E} in product form,
/// `−i·(2κ_R/κ)·(κ − iΔc)/(2κ_R − κ − iΔc)`.
///
/// This is the quantity `(q − i)/Π`; it is finite everywhere except the
/// critical-coupling pole and needs neither a square root nor a branch cut.
pub fn coupling_factor<T: Real>(delta_c: T, cavity: &CavityParams<T>) -> Result<Complex<T>> {
    check_pole(delta_c, cavity)?;
    let two_kr_over_k = lit::<T>(2.0) * cavity.kappa_r / cavity.kappa;
    let num = Complex::new(cavity.kappa, -delta_c);
    let den = Complex::new(cavity.coupling_imbalance(), -delta_c);
    Ok(Complex::new(T::zero(), -two_kr_over_k) * num / den)
}

/// Collective Lamb shift δ_LS = −(NΓs/2)·(Δc/κ).
///
/// Dispersive partner of [`single_atom_width`]: both come from the same
/// single-mode Lorentzian `1/(κ + iΔc)`.
pub fn lamb_shift<T: Real>(
    delta_c: T,
    gamma_s: T,
    n_eff: T,
    cavity: &CavityParams<T>,
) -> Result<T> {
    if cavity.kappa == T::zero() {
        return Err(Error::singular("Lamb shift undefined for kappa = 0"));
    }
    Ok(-(n_eff * gamma_s / lit::<T>(2.0)) * (delta_c / cavity.kappa))
}

/// Complex asymmetry parameter q = i + Π·r_E·e^{iφ_E}.
pub fn complex_q<T: Real>(pi_strength: T, r_e: T, phi_e: T) -> Complex<T> {
    Complex::<T>::i() + Complex::from_polar(pi_strength * r_e, phi_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn over() -> CavityParams<f64> {
        CavityParams::table_overcritical()
    }
    fn under() -> CavityParams<f64> {
        CavityParams::table_undercritical()
    }

    #[test]
    fn detuning_examples() {
        let c = over();
        assert_eq!(cavity_detuning(c.theta_mode, &c).unwrap(), 0.0);
        // independent evaluation: sin(2.338e-3)/sin(2.380e-3) - 1
        let d = cavity_detuning(2.380e-3, &c).unwrap();
        assert!((d - (-0.017_647)).abs() < 5e-6, "{d}");
        assert!(cavity_detuning(2.280e-3, &under()).unwrap() > 0.0);
        assert!(cavity_detuning(0.0, &c).is_err());
        assert!(cavity_detuning(-1e-3, &c).is_err());
        assert!(cavity_detuning(f64::NAN, &c).is_err());
    }

    #[test]
    fn regimes() {
        assert_eq!(over().regime(), Regime::Overcritical);
        assert_eq!(under().regime(), Regime::Undercritical);
        let crit = CavityParams::new(2.3e-3, 0.02, 0.01).unwrap();
        assert_eq!(crit.regime(), Regime::Critical);
        let near = CavityParams::new(2.3e-3, 0.02, 0.01 * (1.0 + 1e-12)).unwrap();
        assert_eq!(near.regime(), Regime::Critical);
        assert_eq!(classify_regime(&near, 0.0), Regime::Overcritical);
    }

    #[test]
    fn single_atom_width_identities() {
        let c = over();
        let g = 3.0e-10;
        let on = single_atom_width(0.0, &c, g).unwrap();
        assert!((on - 2.0 * g * g / c.kappa).abs() <= 1e-15 * on);
        let half = single_atom_width(c.kappa, &c, g).unwrap();
        assert!((half - g * g / c.kappa).abs() <= 1e-15 * on);
        assert_eq!(single_atom_width(0.01, &c, 0.0).unwrap(), 0.0);
        let mut bad = c;
        bad.kappa = 0.0;
        assert!(matches!(
            single_atom_width(0.0, &bad, g),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn collective_strength_identities() {
        let mut e = NuclearEnsemble::<f64>::new(1.0, 0.0, 10.0, 0.0).unwrap();
        assert_eq!(collective_strength(&e, 5.0), 0.0);
        e.abundance = 1.0;
        assert!((collective_strength(&e, 0.1) - 0.5).abs() < 1e-15);
        assert!((collective_strength(&e, 9.9) - 0.99).abs() < 1e-15);
    }

    #[test]
    fn amplitude_examples() {
        let c = over();
        let r = relative_amplitude(0.0, &c).unwrap();
        let expected = 2.0 * 1.667 / (2.0 * 1.667 - 1.938);
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 2.388).abs() < 1e-3);
        let far = relative_amplitude(1e6, &c).unwrap();
        assert!((far - 2.0 * c.kappa_r / c.kappa).abs() < 1e-9);
        let eq = CavityParams::<f64>::new(2.3e-3, 0.02, 0.02).unwrap();
        assert!((relative_amplitude(0.0, &eq).unwrap() - 2.0).abs() < 1e-15);
        let crit = CavityParams::new(2.3e-3, 0.02, 0.01).unwrap();
        assert!(matches!(
            relative_amplitude(0.0, &crit),
            Err(Error::Singularity(_))
        ));
        assert!(relative_amplitude(1e-3, &crit).is_ok());
    }

    #[test]
    fn phase_examples() {
        assert!((relative_phase(0.0, &over()).unwrap() + FRAC_PI_2).abs() < 1e-15);
        assert!((relative_phase(0.0, &under()).unwrap() - FRAC_PI_2).abs() < 1e-15);
        // 2κ_R − κ = κ and Δc = κ: −π/4 + π/4 − π/2
        let c = CavityParams::new(2.3e-3, 0.02, 0.02).unwrap();
        let phi = relative_phase(0.02, &c).unwrap();
        assert!((phi - (-FRAC_PI_4 + FRAC_PI_4 - FRAC_PI_2)).abs() < 1e-15);
        let crit = CavityParams::new(2.3e-3, 0.02, 0.01).unwrap();
        assert!(relative_phase(0.0, &crit).is_err());
    }

    #[test]
    fn lamb_shift_examples() {
        let c = over();
        assert_eq!(lamb_shift(0.0, 2.0, 3.0, &c).unwrap(), 0.0);
        let s = lamb_shift(c.kappa, 2.0, 3.0, &c).unwrap();
        assert!((s + 3.0).abs() < 1e-15);
        let p = lamb_shift(0.004, 2.0, 3.0, &c).unwrap();
        let m = lamb_shift(-0.004, 2.0, 3.0, &c).unwrap();
        assert_eq!(p.signum(), -m.signum());
    }

    #[test]
    fn q_examples() {
        assert_eq!(complex_q(0.0, 2.388, -FRAC_PI_2), Complex::i());
        let q = complex_q(1.0, 2.388, -FRAC_PI_2);
        assert!((q - Complex::new(0.0, 1.0 - 2.388)).norm() < 1e-15);
        let q = complex_q(1.0, 1.0, 0.0);
        assert!((q - Complex::new(1.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn product_form_matches_polar_form() {
        for c in [over(), under()] {
            for k in -40..=40 {
                let d = k as f64 * 1.3e-3;
                let w = coupling_factor(d, &c).unwrap();
                let r = relative_amplitude(d, &c).unwrap();
                let phi = relative_phase(d, &c).unwrap();
                assert!((w - Complex::from_polar(r, phi)).norm() < 1e-12 * r);
            }
        }
    }

    #[test]
    fn fe57_calibration_hits_target() {
        let c = over();
        let e = NuclearEnsemble::fe57(&c, 100.0).unwrap();
        let gs = single_atom_width(0.0, &c, e.g).unwrap();
        assert!((e.effective_number() * gs / e.gamma - 100.0).abs() < 1e-9);
        assert!(e.with_abundance(1.5).is_err());
        assert!(NuclearEnsemble::new(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn detuning_state_is_affine_in_energy() {
        let c = over();
        let e = NuclearEnsemble::fe57(&c, 100.0).unwrap();
        let s0 = DetuningState::new(2.38e-3, 0.0, &c, &e).unwrap();
        let s1 = DetuningState::new(2.38e-3, e.gamma, &c, &e).unwrap();
        let s2 = DetuningState::new(2.38e-3, 2.0 * e.gamma, &c, &e).unwrap();
        let slope = s1.epsilon - s0.epsilon;
        assert!(slope > 0.0);
        assert!(((s2.epsilon - s1.epsilon) - slope).abs() < 1e-12 * slope.abs());
        let on = DetuningState::new(c.theta_mode, 0.0, &c, &e).unwrap();
        assert_eq!(on.delta_c, 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let c = CavityParams::<f32>::table_overcritical();
        let e = NuclearEnsemble::<f32>::fe57(&c, 100.0).unwrap();
        let d = cavity_detuning(2.38e-3f32, &c).unwrap();
        let w = coupling_factor(d, &c).unwrap();
        let gs = single_atom_width(d, &c, e.g).unwrap();
        let pi = collective_strength(&e, gs);
        let q = Complex::<f32>::i() + w * pi;
        assert!(q.re < 0.0 && q.im < 0.0);
    }
}
