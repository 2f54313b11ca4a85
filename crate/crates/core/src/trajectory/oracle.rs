use crate::error::{Error, Result};
use crate::fitting::{fit_bare_cavity, fit_fano, BareCavityFit, FanoContext, FanoFit};
use crate::grid::linspace;
use crate::layersim::{
    default_energy_grid, default_rocking_grid, energy_scan, regime_from_amplitudes,
    rocking_amplitudes, LayerStack,
};
use crate::model::{
    cavity_detuning, single_atom_width, CavityParams, NuclearEnsemble, Regime,
    DEFAULT_COUPLING_IN_GAMMA,
};
use crate::optimize::OptimizerConfig;
use crate::scalar::{lit, Real};

/// The bare-cavity model is fitted within this angular distance of the dip.
pub const ORACLE_WINDOW_HALF_WIDTH: f64 = 50e-6;
const ORACLE_WINDOW_POINTS: usize = 801;
/// Offset from the fitted mode at which the model's n_ref is matched to the
/// oracle by default.
pub const CALIBRATION_OFFSET: f64 = 42e-6;

/// Effective number of nuclei that reproduces a collective strength Π at
/// single-atom width Γs: `N = Π·γ / ((1 − Π)·Γs)`.
pub fn calibrate_n_ref<T: Real>(pi_strength: T, gamma_s: T, gamma: T) -> Result<T> {
    if !(pi_strength >= T::zero() && pi_strength < T::one()) || !(gamma_s > T::zero()) {
        return Err(Error::domain(format!(
            "cannot calibrate from Π = {pi_strength}, Γs = {gamma_s}"
        )));
    }
    Ok(pi_strength * gamma / ((T::one() - pi_strength) * gamma_s))
}

/// A multilayer stack together with the cavity fitted to its rocking curve.
#[derive(Debug, Clone)]
pub struct OracleSetup<T> {
    pub stack: LayerStack<T>,
    /// Fit of the bare-cavity model around the rocking-curve dip.
    pub bare_fit: BareCavityFit<T>,
    pub cavity: CavityParams<T>,
    /// Regime read from the phase of the reflection amplitude.
    pub regime: Regime,
    /// Angle of minimum bare reflectivity.
    pub dip_theta: T,
    pub gamma: T,
    /// Probe offsets for every energy scan.
    pub energy_grid: Vec<T>,
    pub config: OptimizerConfig<T>,
}

impl<T: Real> OracleSetup<T> {
    /// Locates the first mode on the default rocking grid and fits the
    /// bare-cavity model around it.
    pub fn from_stack(stack: LayerStack<T>) -> Result<Self> {
        Self::with_rocking_grid(stack, &default_rocking_grid())
    }

    pub fn with_rocking_grid(stack: LayerStack<T>, rocking_grid: &[T]) -> Result<Self> {
        let gamma = stack
            .resonant_layer()
            .map(|n| n.gamma)
            .ok_or_else(|| Error::input("oracle stack needs a nuclear-resonant layer"))?;
        let amps = rocking_amplitudes(&stack, rocking_grid)?;
        let regime = regime_from_amplitudes(&amps);
        let curve: Vec<T> = amps.iter().map(|a| a.norm_sqr()).collect();
        let imin = (0..curve.len())
            .min_by(|&a, &b| {
                curve[a]
                    .partial_cmp(&curve[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .ok_or_else(|| Error::input("empty rocking grid"))?;
        if imin == 0 || imin == curve.len() - 1 {
            return Err(Error::Degenerate(
                "rocking-curve minimum at the scan edge; widen the angular scan".into(),
            ));
        }
        let dip_theta = rocking_grid[imin];
        let half = lit::<T>(ORACLE_WINDOW_HALF_WIDTH);
        let window = linspace(dip_theta - half, dip_theta + half, ORACLE_WINDOW_POINTS);
        let window_curve = crate::layersim::rocking_scan(&stack, &window)?;
        let config = OptimizerConfig::default();
        let bare_fit = fit_bare_cavity(&window, &window_curve, Some(regime), &config)?;
        if !bare_fit.converged {
            return Err(Error::Fit(format!(
                "bare-cavity fit to the rocking curve failed: {:?}",
                bare_fit.diagnostics
            )));
        }
        let cavity = bare_fit.cavity()?;
        Ok(Self {
            stack,
            bare_fit,
            cavity,
            regime,
            dip_theta,
            gamma,
            energy_grid: default_energy_grid(gamma),
            config,
        })
    }

    /// Energy scan at (θ, abundance) and its Fano fit.
    pub fn fit_point(&self, theta: T, abundance: T) -> Result<FanoFit<T>> {
        let data = energy_scan(&self.stack, theta, &self.energy_grid, abundance)?;
        let context = FanoContext::from_cavity(theta, &self.cavity, self.gamma)?;
        fit_fano(&self.energy_grid, &data, &context, &self.config)
    }

    /// Model ensemble on the fitted cavity whose Π matches the oracle at full
    /// abundance and angle `theta`, with coupling g = 1000γ.
    pub fn calibrated_ensemble(&self, theta: T) -> Result<NuclearEnsemble<T>> {
        let fit = self.fit_point(theta, T::one())?;
        if !fit.converged {
            return Err(Error::Fit("calibration fit did not converge".into()));
        }
        let g = self.gamma * lit(DEFAULT_COUPLING_IN_GAMMA);
        let delta_c = cavity_detuning(theta, &self.cavity)?;
        let gamma_s = single_atom_width(delta_c, &self.cavity, g)?;
        let n_ref = calibrate_n_ref(fit.pi_strength, gamma_s, self.gamma)?;
        NuclearEnsemble::new(self.gamma, g, n_ref, T::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::collective_strength;

    #[test]
    fn calibration_inverts_collective_strength() {
        let e = NuclearEnsemble::<f64>::new(1e-3, 1.0, 37.0, 1.0).unwrap();
        let gs = 0.02;
        let pi = collective_strength(&e, gs);
        let n = calibrate_n_ref(pi, gs, e.gamma).unwrap();
        assert!((n / 37.0 - 1.0).abs() < 1e-12);
        assert!(calibrate_n_ref(1.0, gs, 1e-3).is_err());
    }
}
