use fano_cavity::fitting::{fit_bare_cavity, fit_fano, BareCavityModel, FanoContext};
use fano_cavity::grid::linspace;
use fano_cavity::layersim::{
    parratt_reflectivity, Layer, LayerStack, Material, NuclearSusceptibility,
};
use fano_cavity::model::{
    cavity_detuning, lamb_shift, reflectivity_spectrum, relative_amplitude, single_atom_width,
    CavityParams, FanoProfile, NuclearEnsemble, Regime,
};
use fano_cavity::optimize::OptimizerConfig;
use fano_cavity::trajectory::{
    angle_diff_mod_pi, angles_from_offsets, default_offsets, fit_arc, fit_line, sweep_abundance,
    sweep_angle, QSource, DEFAULT_ABUNDANCES,
};
use num_complex::Complex;
use proptest::prelude::*;

fn cavity_strategy(regime: Regime) -> impl Strategy<Value = CavityParams<f64>> {
    let ratio = match regime {
        Regime::Overcritical => 0.55..0.9,
        _ => 0.1..0.45,
    };
    (2.2e-3..2.5e-3, 0.5e-2..2.5e-2, ratio)
        .prop_map(|(theta, kappa, r)| CavityParams::new(theta, kappa, kappa * r).unwrap())
}

fn any_cavity() -> impl Strategy<Value = CavityParams<f64>> {
    prop_oneof![
        cavity_strategy(Regime::Overcritical),
        cavity_strategy(Regime::Undercritical)
    ]
}

fn phi_strategy() -> impl Strategy<Value = f64> {
    (0.01..0.1f64, any::<bool>()).prop_map(|(p, neg): (f64, bool)| if neg { -p } else { p })
}

fn bare_round_trip(regime: Regime, amplitude: f64, phi: f64, cavity: CavityParams<f64>) {
    let grid = linspace(2.0e-3, 2.7e-3, 701);
    let data = BareCavityModel {
        amplitude,
        phi,
        cavity,
    }
    .scan(&grid)
    .unwrap();
    let fit = fit_bare_cavity(&grid, &data, Some(regime), &OptimizerConfig::default()).unwrap();
    assert!(fit.converged, "{:?}", fit.diagnostics);
    assert_eq!(fit.regime, regime);
    let truth = [
        amplitude,
        phi,
        cavity.theta_mode * 1e3,
        cavity.kappa * 1e2,
        cavity.kappa_r * 1e2,
    ];
    for (got, want) in fit.params().iter().zip(truth) {
        assert!(((got - want) / want).abs() < 1e-3, "{got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bare_round_trip_overcritical(
        a in 0.6..1.1f64,
        phi in phi_strategy(),
        cavity in cavity_strategy(Regime::Overcritical),
    ) {
        bare_round_trip(Regime::Overcritical, a, phi, cavity);
    }

    #[test]
    fn bare_round_trip_undercritical(
        a in 0.6..1.1f64,
        phi in phi_strategy(),
        cavity in cavity_strategy(Regime::Undercritical),
    ) {
        bare_round_trip(Regime::Undercritical, a, phi, cavity);
    }
}

proptest! {
    #[test]
    fn parity_of_width_amplitude_and_shift(cavity in any_cavity(), d in 1e-4..0.1f64, n in 1.0..1e6f64) {
        let g = 1e-9;
        let gs = |x| single_atom_width(x, &cavity, g).unwrap();
        let r = |x| relative_amplitude(x, &cavity).unwrap();
        let ls = |x| lamb_shift(x, gs(x), n, &cavity).unwrap();
        prop_assert!((gs(d) - gs(-d)).abs() <= 1e-15 * gs(d));
        prop_assert!((r(d) - r(-d)).abs() <= 1e-15 * r(d));
        prop_assert!((ls(d) + ls(-d)).abs() <= 1e-15 * ls(d).abs());
    }

    #[test]
    fn width_grows_with_abundance(cavity in any_cavity(), offset in -60e-6..60e-6f64, a in 0.0..0.99f64) {
        let e = NuclearEnsemble::fe57(&cavity, 100.0).unwrap();
        let theta = cavity.theta_mode + offset;
        let w = |x| FanoProfile::at(theta, &cavity, &e.with_abundance(x).unwrap()).unwrap().width;
        prop_assert!(w(a + 0.01) > w(a));
        prop_assert!(w(0.0) == e.gamma);
    }

    #[test]
    fn abundance_sweeps_are_lines_through_i(cavity in any_cavity(), offset in -60e-6..60e-6f64) {
        prop_assume!(offset.abs() > 1e-7);
        let theta = cavity.theta_mode + offset;
        let source = QSource::Model { cavity, ensemble: NuclearEnsemble::fe57(&cavity, 100.0).unwrap() };
        let t = sweep_abundance(theta, &DEFAULT_ABUNDANCES, &source).unwrap();
        let line = fit_line(&t.ok_points()).unwrap();
        let phi = FanoProfile::at(theta, &cavity, &NuclearEnsemble::fe57(&cavity, 1.0).unwrap()).unwrap().phi_e;
        prop_assert!(line.rms < 1e-10);
        prop_assert!(line.distance_to(Complex::i()) < 1e-10);
        prop_assert!(angle_diff_mod_pi(line.direction, phi).abs() < 1e-8);
        for w in t.points.windows(2) {
            prop_assert!(w[1].pi_strength < w[0].pi_strength);
        }
        let zero = sweep_abundance(theta, &[0.0, 0.5], &source).unwrap();
        prop_assert!((zero.points[0].q - Complex::i()).norm() < 1e-10);
    }

    #[test]
    fn wide_angle_sweeps_fail_the_line_test(cavity in any_cavity(), abundance in 0.1..1.0f64) {
        let source = QSource::Model { cavity, ensemble: NuclearEnsemble::fe57(&cavity, 100.0).unwrap() };
        let thetas = angles_from_offsets(&cavity, &default_offsets::<f64>());
        let t = sweep_angle(abundance, &thetas, &source).unwrap();
        let phis: Vec<f64> = thetas
            .iter()
            .map(|&th| fano_cavity::model::relative_phase(cavity_detuning(th, &cavity).unwrap(), &cavity).unwrap())
            .collect();
        let span = phis.iter().cloned().fold(f64::MIN, f64::max) - phis.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(span > 0.1);
        prop_assert!(!fit_line(&t.ok_points()).unwrap().is_collinear());
    }

    // Holds for all undercritical draws and for 2κ_R/κ up to about 1.36.
    // Beyond that it breaks once the default window spans more than about a
    // cavity width (the reference overcritical cavity is just inside).
    #[test]
    fn arc_radius_is_monotone_in_abundance(
        cavity in prop_oneof![
            cavity_strategy(Regime::Undercritical),
            (2.2e-3..2.5e-3, 0.5e-2..2.5e-2, 0.55..0.68)
                .prop_map(|(t, k, r)| CavityParams::new(t, k, k * r).unwrap()),
            Just(CavityParams::table_overcritical()),
        ]
    ) {
        let source = QSource::Model { cavity, ensemble: NuclearEnsemble::fe57(&cavity, 100.0).unwrap() };
        let thetas = angles_from_offsets(&cavity, &default_offsets::<f64>());
        let radii: Vec<f64> = [0.1, 0.3, 0.5, 0.7, 1.0]
            .iter()
            .map(|&a| fit_arc(&sweep_angle(a, &thetas, &source).unwrap().ok_points()).unwrap().radius)
            .collect();
        for w in radii.windows(2) {
            prop_assert!(w[1] >= w[0], "{radii:?}");
        }
    }

    #[test]
    fn fano_fit_is_scale_equivariant(c in 0.01..100.0f64, offset in 20e-6..60e-6f64) {
        let cavity = CavityParams::table_overcritical();
        let e = NuclearEnsemble::fe57(&cavity, 100.0).unwrap();
        let theta = cavity.theta_mode + offset;
        let omega = linspace(-1000.0 * e.gamma, 1000.0 * e.gamma, 801);
        let data = reflectivity_spectrum(&omega, theta, &cavity, &e).unwrap();
        let scaled: Vec<f64> = data.iter().map(|v| v * c).collect();
        let ctx = FanoContext::from_cavity(theta, &cavity, e.gamma).unwrap();
        let cfg = OptimizerConfig::default();
        let f1 = fit_fano(&omega, &data, &ctx, &cfg).unwrap();
        let f2 = fit_fano(&omega, &scaled, &ctx, &cfg).unwrap();
        prop_assert!((f2.a / f1.a / c - 1.0).abs() < 1e-8);
        prop_assert!((f2.q - f1.q).norm() < 1e-8);
        prop_assert!((f2.width / f1.width - 1.0).abs() < 1e-8);
        prop_assert!((f2.shift - f1.shift).abs() < 1e-8 * f1.width);
    }

    #[test]
    fn parratt_stays_below_unity(theta in 1.0e-3..6.0e-3f64, omega in -1e-11..1e-11f64, abundance in 0.0..1.0f64) {
        let pt = Material::new("Pt", 1.6e-5, 2.5e-6).unwrap();
        let c = Material::new("C", 3.3e-6, 2.0e-9).unwrap();
        let fe = Material::new("Fe", 7.5e-6, 3.5e-7).unwrap();
        let stack = LayerStack::new(
            vec![
                Layer::new(pt.clone(), 0.5),
                Layer::new(c.clone(), 20.8),
                Layer::resonant(fe, 0.3, NuclearSusceptibility::fe57(abundance)),
                Layer::new(c, 19.6),
                Layer::new(pt, 2.5),
            ],
            Material::new("Si", 4.9e-6, 1.0e-8).unwrap(),
        )
        .unwrap();
        let r = parratt_reflectivity(&stack, theta, omega).unwrap();
        prop_assert!(r.norm_sqr() <= 1.0);
    }
}

#[test]
fn bare_fit_is_deterministic() {
    let grid = linspace(2.0e-3f64, 2.7e-3, 301);
    let data = BareCavityModel {
        amplitude: 0.9,
        phi: 0.03,
        cavity: CavityParams::table_undercritical(),
    }
    .scan(&grid)
    .unwrap();
    let noisy = fano_cavity::noise::multiplicative_gaussian(&data, 0.01, 11).unwrap();
    let run = || {
        serde_json::to_string(
            &fit_bare_cavity(&grid, &noisy, None, &OptimizerConfig::default()).unwrap(),
        )
        .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn noisy_bare_fit_stays_close() {
    let grid = linspace(2.0e-3, 2.7e-3, 701);
    let cavity = CavityParams::<f64>::table_overcritical();
    let data = BareCavityModel {
        amplitude: 0.77,
        phi: -0.02,
        cavity,
    }
    .scan(&grid)
    .unwrap();
    let noisy = fano_cavity::noise::multiplicative_gaussian(&data, 0.01, 5).unwrap();
    let fit = fit_bare_cavity(
        &grid,
        &noisy,
        Some(Regime::Overcritical),
        &OptimizerConfig::default(),
    )
    .unwrap();
    assert!(fit.converged);
    assert!((fit.theta_mode - 2.338).abs() < 2e-3);
    assert!((fit.kappa / 1.938 - 1.0).abs() < 0.02);
    assert!((fit.kappa_r / 1.667 - 1.0).abs() < 0.02);
    let sig = fit.uncertainties.as_ref().unwrap();
    assert!(sig.iter().all(|s| s.is_finite() && *s > 0.0));
}
