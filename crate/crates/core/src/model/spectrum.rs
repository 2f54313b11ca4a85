use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{
    cavity_detuning, collective_strength, coupling_factor, lamb_shift, relative_amplitude,
    relative_phase, single_atom_width, CavityParams, NuclearEnsemble,
};
use crate::error::Result;
use crate::grid::check_grid;
use crate::scalar::{lit, Real};

/// Lineshape quantities of the collective resonance at one grazing angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FanoProfile<T> {
    pub theta: T,
    pub delta_c: T,
    /// Complex asymmetry parameter.
    pub q: Complex<T>,
    /// Collective resonant strength Π.
    pub pi_strength: T,
    /// Total width NΓs + γ.
    pub width: T,
    pub lamb_shift: T,
    pub r_e: T,
    pub phi_e: T,
    /// Off-resonant level |2κ_R/(κ r_E)|².
    pub prefactor: T,
}

impl<T: Real> FanoProfile<T> {
    /// Evaluates the profile at grazing angle `theta`.
    ///
    /// Uses the product form of the coupling factor, so `q` and the prefactor
    /// are obtained without forming r_E on its own.
    pub fn at(theta: T, cavity: &CavityParams<T>, ensemble: &NuclearEnsemble<T>) -> Result<Self> {
        let delta_c = cavity_detuning(theta, cavity)?;
        let gamma_s = single_atom_width(delta_c, cavity, ensemble.g)?;
        let n = ensemble.effective_number();
        let pi_strength = collective_strength(ensemble, gamma_s);
        let w = coupling_factor(delta_c, cavity)?;
        let a = cavity.coupling_imbalance();
        let k = cavity.kappa;
        let d2 = delta_c * delta_c;
        Ok(Self {
            theta,
            delta_c,
            q: Complex::<T>::i() + w * pi_strength,
            pi_strength,
            width: n * gamma_s + ensemble.gamma,
            lamb_shift: lamb_shift(delta_c, gamma_s, n, cavity)?,
            r_e: w.norm(),
            phi_e: w.arg(),
            prefactor: (a * a + d2) / (k * k + d2),
        })
    }

    /// Dimensionless energy ε at probe offset `omega` (ω − ω₀).
    pub fn epsilon(&self, omega: T) -> T {
        lit::<T>(2.0) * (omega + self.lamb_shift) / self.width
    }

    /// Reflectivity in the Fano form at probe offset `omega`.
    pub fn lineshape(&self, omega: T) -> T {
        fano_lineshape(self.epsilon(omega), self.q, self.prefactor)
    }
}

/// `prefactor·|ε + q|²/(ε² + 1)`.
pub fn fano_lineshape<T: Real>(epsilon: T, q: Complex<T>, prefactor: T) -> T {
    let num = (q + epsilon).norm_sqr();
    prefactor * num / (epsilon * epsilon + T::one())
}

/// Reflectivity |R|² over a grid of probe offsets ω − ω₀, evaluated directly
/// from the energy-domain resonance term:
///
/// `|2κ_R/(κ r_E)|² · |1 + r_E e^{iφ_E}·(NΓs/2)/(ω − ω₀ + δ_LS + i(NΓs + γ)/2)|²`
pub fn reflectivity_spectrum<T: Real>(
    omega_grid: &[T],
    theta: T,
    cavity: &CavityParams<T>,
    ensemble: &NuclearEnsemble<T>,
) -> Result<Vec<T>> {
    check_grid(omega_grid, "energy")?;
    let two = lit::<T>(2.0);
    let delta_c = cavity_detuning(theta, cavity)?;
    let gamma_s = single_atom_width(delta_c, cavity, ensemble.g)?;
    let n = ensemble.effective_number();
    let collective = n * gamma_s;
    let r_e = relative_amplitude(delta_c, cavity)?;
    let phi_e = relative_phase(delta_c, cavity)?;
    let shift = lamb_shift(delta_c, gamma_s, n, cavity)?;
    let base = two * cavity.kappa_r / (cavity.kappa * r_e);
    let prefactor = base * base;
    let residue = Complex::from_polar(r_e * collective / two, phi_e);
    let half_width = (collective + ensemble.gamma) / two;
    Ok(omega_grid
        .iter()
        .map(|&omega| {
            let amp = residue / Complex::new(omega + shift, half_width) + T::one();
            prefactor * amp.norm_sqr()
        })
        .collect())
}
