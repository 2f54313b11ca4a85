//! Dynamical reflectivity of a stratified medium at grazing incidence.
//!
//! The recursion runs bottom-up over the interfaces (Parratt), with every
//! medium described by its susceptibility `n² − 1` so that the tiny
//! optical constants of hard X-rays are never subtracted from unity. The
//! resonant layer carries an additional single-line Lorentzian response.

mod scan;
mod schema;

pub use scan::{
    default_energy_grid, default_rocking_grid, energy_scan, regime_from_amplitudes,
    rocking_amplitudes, rocking_scan, DEFAULT_ENERGY_POINTS, DEFAULT_ENERGY_SPAN_GAMMA,
    DEFAULT_ROCKING_MAX, DEFAULT_ROCKING_MIN, DEFAULT_ROCKING_POINTS,
};
pub use schema::{
    default_material_table, load_material_table, MaterialEntry, MaterialTable, ResonanceSpec,
    StackFile, StackLayerSpec, MATERIALS_ENV,
};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// hc in keV·nm.
pub const HC_KEV_NM: f64 = 1.239_841_984;
/// Peak resonant susceptibility of pure ⁵⁷Fe at 14.4 keV for an unsplit line
/// (Nσ₀f_LM/k₀ with σ₀ = 2.56×10⁻¹⁸ cm², f_LM = 0.8).
pub const FE57_RESONANT_STRENGTH: f64 = 2.38e-4;

/// Electronic optical constants, n = 1 − δ + iβ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Material<T> {
    pub name: String,
    pub delta: T,
    pub beta: T,
}

impl<T: Real> Material<T> {
    pub fn new(name: impl Into<String>, delta: T, beta: T) -> Result<Self> {
        let m = Self {
            name: name.into(),
            delta,
            beta,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn vacuum() -> Self {
        Self {
            name: "vacuum".into(),
            delta: T::zero(),
            beta: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let limit = lit::<T>(1e-4);
        for (what, v) in [("delta", self.delta), ("beta", self.beta)] {
            if !v.is_finite() {
                return Err(Error::input(format!(
                    "material '{}': non-finite {what}",
                    self.name
                )));
            }
            if v < T::zero() || v >= limit {
                return Err(Error::input(format!(
                    "material '{}': {what} = {v} outside [0, 1e-4)",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Complex refractive index.
    pub fn index(&self) -> Complex<T> {
        Complex::new(T::one() - self.delta, self.beta)
    }

    /// `n² − 1` evaluated without cancellation.
    pub fn susceptibility(&self) -> Complex<T> {
        let n_minus_1 = Complex::new(-self.delta, self.beta);
        n_minus_1 * (n_minus_1 + lit::<T>(2.0))
    }
}

/// Single-line nuclear response of a resonant layer:
/// χ_N(ω) = −s·(γ/2)/(ω − ω₀ + iγ/2), with s = strength at full abundance × abundance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NuclearSusceptibility<T> {
    pub omega0_kev: T,
    /// Natural linewidth (units of ω₀).
    pub gamma: T,
    /// Peak susceptibility at 100 % abundance.
    pub full_strength: T,
    pub abundance: T,
}

impl<T: Real> NuclearSusceptibility<T> {
    pub fn fe57(abundance: T) -> Self {
        Self {
            omega0_kev: lit(crate::model::FE57_TRANSITION_KEV),
            gamma: lit(crate::model::FE57_LINEWIDTH),
            full_strength: lit(FE57_RESONANT_STRENGTH),
            abundance,
        }
    }

    pub fn strength(&self) -> T {
        self.full_strength * self.abundance
    }

    /// Contribution to `n² − 1` at probe offset `omega` (ω − ω₀, units of ω₀).
    pub fn susceptibility(&self, omega: T) -> Complex<T> {
        let s = self.strength();
        if s == T::zero() {
            return Complex::new(T::zero(), T::zero());
        }
        let half = self.gamma / lit::<T>(2.0);
        Complex::new(-s * half, T::zero()) / Complex::new(omega, half)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Layer<T> {
    pub material: Material<T>,
    pub thickness_nm: T,
    pub nuclear: Option<NuclearSusceptibility<T>>,
}

impl<T: Real> Layer<T> {
    pub fn new(material: Material<T>, thickness_nm: T) -> Self {
        Self {
            material,
            thickness_nm,
            nuclear: None,
        }
    }

    pub fn resonant(
        material: Material<T>,
        thickness_nm: T,
        nuclear: NuclearSusceptibility<T>,
    ) -> Self {
        Self {
            material,
            thickness_nm,
            nuclear: Some(nuclear),
        }
    }

    fn susceptibility(&self, omega: T) -> Complex<T> {
        let chi = self.material.susceptibility();
        match &self.nuclear {
            Some(n) => chi + n.susceptibility(omega),
            None => chi,
        }
    }
}

/// Layers ordered top (vacuum side) to bottom, on a semi-infinite substrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LayerStack<T> {
    pub layers: Vec<Layer<T>>,
    pub substrate: Material<T>,
}

impl<T: Real> LayerStack<T> {
    pub fn new(layers: Vec<Layer<T>>, substrate: Material<T>) -> Result<Self> {
        let stack = Self { layers, substrate };
        stack.validate()?;
        Ok(stack)
    }

    pub fn validate(&self) -> Result<()> {
        self.substrate.validate()?;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.material.validate()?;
            if !(layer.thickness_nm.is_finite() && layer.thickness_nm > T::zero()) {
                return Err(Error::input(format!(
                    "layer {i} ({}): thickness must be positive",
                    layer.material.name
                )));
            }
            if let Some(n) = &layer.nuclear {
                let ok = n.gamma > T::zero()
                    && n.full_strength >= T::zero()
                    && n.full_strength.is_finite()
                    && n.abundance >= T::zero()
                    && n.abundance <= T::one()
                    && n.omega0_kev > T::zero();
                if !ok {
                    return Err(Error::input(format!(
                        "layer {i}: invalid nuclear resonance parameters"
                    )));
                }
            }
        }
        if self.layers.iter().filter(|l| l.nuclear.is_some()).count() > 1 {
            return Err(Error::input(
                "at most one nuclear-resonant layer is supported",
            ));
        }
        Ok(())
    }

    pub fn resonant_layer(&self) -> Option<&NuclearSusceptibility<T>> {
        self.layers.iter().find_map(|l| l.nuclear.as_ref())
    }

    /// Copy with the resonant isotope fraction replaced.
    pub fn with_abundance(&self, abundance: T) -> Result<Self> {
        if !(abundance >= T::zero() && abundance <= T::one()) {
            return Err(Error::domain(format!(
                "abundance {abundance} outside [0, 1]"
            )));
        }
        let mut out = self.clone();
        for layer in &mut out.layers {
            if let Some(n) = &mut layer.nuclear {
                n.abundance = abundance;
            }
        }
        Ok(out)
    }

    /// Copy with every nuclear response removed.
    pub fn bare(&self) -> Self {
        let mut out = self.clone();
        for layer in &mut out.layers {
            layer.nuclear = None;
        }
        out
    }

    /// Transition energy of the resonant layer, or ⁵⁷Fe if none.
    pub fn omega0_kev(&self) -> T {
        self.resonant_layer()
            .map(|n| n.omega0_kev)
            .unwrap_or_else(|| lit(crate::model::FE57_TRANSITION_KEV))
    }
}

/// Vacuum wavenumber (1/nm) at photon energy `energy_kev`.
pub fn wavenumber<T: Real>(energy_kev: T) -> T {
    T::TAU() * energy_kev / lit::<T>(HC_KEV_NM)
}

/// Normal wavevector component k₀·sqrt(n² − cos²θ) in a medium of index `n`,
/// on the branch with non-negative imaginary part.
pub fn kz<T: Real>(theta: T, n: Complex<T>, k0: T) -> Complex<T> {
    kz_from_susceptibility(theta, n * n - T::one(), k0)
}

fn kz_from_susceptibility<T: Real>(theta: T, chi: Complex<T>, k0: T) -> Complex<T> {
    let s = theta.sin();
    let root = (chi + s * s).sqrt();
    let root = if root.im < T::zero() { -root } else { root };
    root * k0
}

/// Complex reflection amplitude of the stack at grazing angle `theta`
/// (radians) and probe offset `omega` = ω − ω₀ (units of ω₀).
///
/// The offset only enters through the nuclear response; the wavenumber is
/// taken at ω₀, where it is constant to ~10⁻¹¹ over a µeV window.
pub fn parratt_reflectivity<T: Real>(
    stack: &LayerStack<T>,
    theta: T,
    omega: T,
) -> Result<Complex<T>> {
    if !(theta.is_finite() && theta > T::zero() && theta < T::FRAC_PI_2()) {
        return Err(Error::domain(format!(
            "grazing angle {theta} rad outside (0, pi/2)"
        )));
    }
    if !omega.is_finite() {
        return Err(Error::input("non-finite probe energy"));
    }
    let k0 = wavenumber(stack.omega0_kev());
    let zero = Complex::new(T::zero(), T::zero());

    // kz for vacuum, each layer, substrate.
    let mut kzs = Vec::with_capacity(stack.layers.len() + 2);
    kzs.push(kz_from_susceptibility(theta, zero, k0));
    for layer in &stack.layers {
        let chi = layer.susceptibility(omega);
        if !(chi.re.is_finite() && chi.im.is_finite()) {
            return Err(Error::input(format!(
                "non-finite optical response in layer '{}'",
                layer.material.name
            )));
        }
        kzs.push(kz_from_susceptibility(theta, chi, k0));
    }
    kzs.push(kz_from_susceptibility(
        theta,
        stack.substrate.susceptibility(),
        k0,
    ));

    let fresnel = |upper: Complex<T>, lower: Complex<T>| {
        let sum = upper + lower;
        if sum == zero {
            zero
        } else {
            (upper - lower) / sum
        }
    };

    let last = kzs.len() - 1;
    let mut r_below = fresnel(kzs[last - 1], kzs[last]);
    for j in (0..last - 1).rev() {
        let layer = &stack.layers[j];
        let phase =
            (Complex::new(T::zero(), lit::<T>(2.0) * layer.thickness_nm) * kzs[j + 1]).exp();
        let r = fresnel(kzs[j], kzs[j + 1]);
        let carried = r_below * phase;
        r_below = (r + carried) / (r * carried + T::one());
    }
    Ok(r_below)
}
