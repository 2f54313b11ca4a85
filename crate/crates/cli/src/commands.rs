use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde_json::json;

use fano_cavity::fitting::{
    fit_bare_cavity, fit_fano as run_fano_fit, BareCavityModel, FanoContext,
};
use fano_cavity::grid::linspace;
use fano_cavity::layersim::{energy_scan as oracle_energy_scan, rocking_scan};
use fano_cavity::model::{
    cavity_detuning, reflectivity_spectrum, relative_phase, Regime, FE57_LINEWIDTH,
};
use fano_cavity::noise::multiplicative_gaussian;
use fano_cavity::optimize::{OptimizerConfig, Weighting};
use fano_cavity::scanfile::{round_json, ScanData};
use fano_cavity::trajectory::{
    angles_from_offsets, fit_arc, fit_line, fmt_num, q_surface, surface_csv, sweep_abundance,
    sweep_angle, trajectory_csv, OracleSetup, QSource, QTrajectory, CALIBRATION_OFFSET,
};

use crate::inputs::{
    abundance_grid, build_q_source, check_noise, offsets_urad, parse_optional_source, parse_source,
    CavityFile, ExpectFile, SourceInput,
};
use crate::{
    CliError, CliResult, Format, Output, RegimeArg, SourceArgs, SourceKind, SweepArg,
    EXIT_NOT_CONVERGED, EXIT_POINTS_FAILED, EXIT_USAGE,
};

const MIN_OK_FRACTION: f64 = 0.9;

fn json_text(mut value: serde_json::Value) -> String {
    round_json(&mut value);
    let mut s = serde_json::to_string_pretty(&value).expect("JSON values serialize");
    s.push('\n');
    s
}

fn write_scan(out: &Output, scan: &ScanData) -> CliResult<()> {
    match out.format {
        Format::Csv => out.write(&scan.to_csv()),
        Format::Json => {
            let mut s = scan.to_json()?;
            s.push('\n');
            out.write(&s)
        }
    }
}

fn add_noise(y: Vec<f64>, noise: f64, seed: u64) -> CliResult<Vec<f64>> {
    if noise > 0.0 {
        Ok(multiplicative_gaussian(&y, noise, seed)?)
    } else {
        Ok(y)
    }
}

fn source_label(args: &SourceArgs) -> &'static str {
    match args.source {
        SourceKind::Model => "model",
        SourceKind::Oracle => "oracle",
    }
}

pub fn bare_scan(
    out: &Output,
    args: &SourceArgs,
    points: usize,
    theta_min: f64,
    theta_max: f64,
    noise: f64,
) -> CliResult<()> {
    if points == 0 {
        return Err(CliError::usage("--points must be positive"));
    }
    if !(theta_min > 0.0 && theta_max > theta_min) {
        return Err(CliError::usage("need 0 < --theta-min < --theta-max"));
    }
    check_noise(noise)?;
    let input = parse_source(args)?;
    let mrad = if points == 1 {
        vec![theta_min]
    } else {
        linspace(theta_min, theta_max, points)
    };
    let grid: Vec<f64> = mrad.iter().map(|t| t * 1e-3).collect();
    let y = match (args.source, input) {
        (_, SourceInput::Cavity(c)) => BareCavityModel {
            amplitude: c.a,
            phi: c.phi,
            cavity: c.cavity()?,
        }
        .scan(&grid)?,
        (SourceKind::Oracle, SourceInput::Stack(stack)) => rocking_scan(&stack, &grid)?,
        (SourceKind::Model, SourceInput::Stack(stack)) => OracleSetup::from_stack(stack)?
            .bare_fit
            .model()?
            .scan(&grid)?,
    };
    let mut scan = ScanData::new("theta_mrad", "R2", mrad, add_noise(y, noise, out.seed)?);
    scan.metadata
        .insert("source".into(), json!(source_label(args)));
    if noise > 0.0 {
        scan.metadata.insert("noise".into(), json!(noise));
        scan.metadata.insert("seed".into(), json!(out.seed));
    }
    write_scan(out, &scan)
}

pub fn energy_scan(
    out: &Output,
    args: &SourceArgs,
    theta_mrad: f64,
    abundance: f64,
    points: usize,
    span: f64,
    noise: f64,
) -> CliResult<()> {
    if points < 2 {
        return Err(CliError::usage("--points must be at least 2"));
    }
    if !(span > 0.0 && span.is_finite()) {
        return Err(CliError::usage("--span must be positive"));
    }
    if !(0.0..=1.0).contains(&abundance) {
        return Err(CliError::usage("--abundance must lie in [0, 1]"));
    }
    check_noise(noise)?;
    let input = parse_source(args)?;
    let theta = theta_mrad * 1e-3;
    let (gamma, y) = match (args.source, input) {
        (SourceKind::Oracle, SourceInput::Stack(stack)) => {
            let gamma = stack.resonant_layer().map(|n| n.gamma).ok_or_else(|| {
                CliError::usage("stack has no resonant layer (set 'abundance' on one layer)")
            })?;
            let grid = linspace(-span * gamma, span * gamma, points);
            (gamma, oracle_energy_scan(&stack, theta, &grid, abundance)?)
        }
        (kind, input) => {
            let QSource::Model { cavity, ensemble } = build_q_source(kind, input)? else {
                unreachable!("model inputs build model sources")
            };
            let ensemble = ensemble.with_abundance(abundance)?;
            let grid = linspace(-span * ensemble.gamma, span * ensemble.gamma, points);
            (
                ensemble.gamma,
                reflectivity_spectrum(&grid, theta, &cavity, &ensemble)?,
            )
        }
    };
    let x = linspace(-span, span, points);
    let mut scan = ScanData::new("energy_gamma", "R2", x, add_noise(y, noise, out.seed)?);
    scan.metadata
        .insert("source".into(), json!(source_label(args)));
    scan.metadata.insert("theta_mrad".into(), json!(theta_mrad));
    scan.metadata.insert("abundance".into(), json!(abundance));
    scan.metadata.insert("gamma".into(), json!(gamma));
    if noise > 0.0 {
        scan.metadata.insert("noise".into(), json!(noise));
        scan.metadata.insert("seed".into(), json!(out.seed));
    }
    write_scan(out, &scan)
}

fn config(poisson: bool) -> OptimizerConfig<f64> {
    OptimizerConfig {
        weighting: if poisson {
            Weighting::Poisson
        } else {
            Weighting::Uniform
        },
        ..OptimizerConfig::default()
    }
}

fn table_csv(rows: &[(&str, String, Option<f64>)]) -> String {
    let mut s = String::from("parameter,value,uncertainty\n");
    for (name, value, sigma) in rows {
        let sigma = sigma.map(fmt_num).unwrap_or_default();
        let _ = writeln!(s, "{name},{value},{sigma}");
    }
    s
}

fn report_diagnostics(out: &Output, diagnostics: &[String]) {
    if out.verbose {
        for d in diagnostics {
            eprintln!("note: {d}");
        }
    }
}

const BARE_KEYS: [&str; 6] = ["A", "phi", "theta_mode", "kappa", "kappa_r", "residual_rms"];

pub fn fit_cavity(
    out: &Output,
    input: &Path,
    regime: Option<RegimeArg>,
    expect: Option<&Path>,
    poisson: bool,
) -> CliResult<()> {
    let scan = ScanData::from_path(input)?;
    let expect = expect
        .map(|p| ExpectFile::from_path(p, &BARE_KEYS))
        .transpose()?;
    let hint = regime.map(|r| match r {
        RegimeArg::Over => Regime::Overcritical,
        RegimeArg::Under => Regime::Undercritical,
    });
    let grid: Vec<f64> = scan.x.iter().map(|t| t * 1e-3).collect();
    let fit = fit_bare_cavity(&grid, &scan.y, hint, &config(poisson))?;
    let cavity = CavityFile {
        theta_mode_mrad: fit.theta_mode,
        kappa: fit.kappa,
        kappa_r: fit.kappa_r,
        a: fit.a,
        phi: fit.phi,
        superradiance: None,
        n_ref: None,
    };
    let text = match out.format {
        Format::Json => json_text(json!({ "kind": "bare-cavity", "fit": fit, "cavity": cavity })),
        Format::Csv => {
            let sig = |k: usize| fit.uncertainties.as_ref().map(|u| u[k]);
            let p = fit.params();
            let mut rows: Vec<(&str, String, Option<f64>)> = BARE_KEYS[..5]
                .iter()
                .enumerate()
                .map(|(k, name)| (*name, fmt_num(p[k]), sig(k)))
                .collect();
            rows.push(("residual_rms", fmt_num(fit.residual_rms), None));
            rows.push(("regime", fit.regime.to_string(), None));
            rows.push(("converged", fit.converged.to_string(), None));
            rows.push(("termination", format!("{:?}", fit.termination), None));
            table_csv(&rows)
        }
    };
    out.write(&text)?;
    report_diagnostics(out, &fit.diagnostics);
    if !fit.converged {
        return Err(CliError::new(
            EXIT_NOT_CONVERGED,
            format!(
                "bare-cavity fit did not converge ({}): {}",
                fit.termination,
                fit.diagnostics.join("; ")
            ),
        ));
    }
    if let Some(e) = expect {
        let values: BTreeMap<&str, f64> = BARE_KEYS
            .iter()
            .copied()
            .zip(fit.params().into_iter().chain([fit.residual_rms]))
            .collect();
        e.check(&values, Some(fit.regime))?;
    }
    Ok(())
}

const FANO_KEYS: [&str; 7] = [
    "q_re",
    "q_im",
    "pi_strength",
    "width_gamma",
    "shift_gamma",
    "a",
    "residual_rms",
];

fn metadata_f64(scan: &ScanData, key: &str) -> CliResult<Option<f64>> {
    match scan.metadata.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| CliError::usage(format!("scan metadata '{key}' must be a number"))),
    }
}

pub fn fit_fano(
    out: &Output,
    input: &Path,
    args: &SourceArgs,
    theta_mrad: Option<f64>,
    expect: Option<&Path>,
    poisson: bool,
) -> CliResult<()> {
    let scan = ScanData::from_path(input)?;
    let expect = expect
        .map(|p| ExpectFile::from_path(p, &FANO_KEYS))
        .transpose()?;
    let source = parse_optional_source(args)?;
    let gamma = metadata_f64(&scan, "gamma")?.unwrap_or(FE57_LINEWIDTH);
    if !(gamma > 0.0) {
        return Err(CliError::usage("scan metadata 'gamma' must be positive"));
    }
    let theta_mrad = match theta_mrad {
        Some(t) => Some(t),
        None => metadata_f64(&scan, "theta_mrad")?,
    };
    let context = match source {
        None => FanoContext::new(gamma),
        Some(input) => {
            let theta = theta_mrad.ok_or_else(|| {
                CliError::usage("a cavity context needs --theta (or theta_mrad in the scan)")
            })? * 1e-3;
            let (cavity, ensemble) = match input {
                SourceInput::Cavity(c) => (c.cavity()?, Some(c.ensemble()?)),
                SourceInput::Stack(stack) => (OracleSetup::from_stack(stack)?.cavity, None),
            };
            let ctx = FanoContext::from_cavity(theta, &cavity, gamma)?;
            match ensemble {
                Some(e) => {
                    let abundance = metadata_f64(&scan, "abundance")?.unwrap_or(1.0);
                    ctx.with_ensemble(theta, &cavity, &e.with_abundance(abundance)?)?
                }
                None => ctx,
            }
        }
    };
    let omega: Vec<f64> = scan.x.iter().map(|x| x * gamma).collect();
    let fit = run_fano_fit(&omega, &scan.y, &context, &config(poisson))?;
    let width_gamma = fit.width / gamma;
    let shift_gamma = fit.shift / gamma;
    let text = match out.format {
        Format::Json => json_text(json!({
            "kind": "fano",
            "fit": fit,
            "gamma": gamma,
            "width_gamma": width_gamma,
            "shift_gamma": shift_gamma,
        })),
        Format::Csv => {
            let sig = |k: usize| fit.uncertainties.as_ref().map(|u| u[k]);
            let rows = vec![
                ("q_re", fmt_num(fit.q.re), sig(0)),
                ("q_im", fmt_num(fit.q.im), sig(1)),
                ("pi_strength", fmt_num(fit.pi_strength), None),
                (
                    "width_gamma",
                    fmt_num(width_gamma),
                    sig(2).map(|s| s / gamma),
                ),
                (
                    "shift_gamma",
                    fmt_num(shift_gamma),
                    sig(3).map(|s| s / gamma),
                ),
                ("a", fmt_num(fit.a), sig(4)),
                ("b", fmt_num(fit.b), None),
                ("residual_rms", fmt_num(fit.residual_rms), None),
                ("converged", fit.converged.to_string(), None),
                ("termination", format!("{:?}", fit.termination), None),
            ];
            table_csv(&rows)
        }
    };
    out.write(&text)?;
    report_diagnostics(out, &fit.diagnostics);
    if !fit.converged {
        return Err(CliError::new(
            EXIT_NOT_CONVERGED,
            format!(
                "Fano fit did not converge ({}): {}",
                fit.termination,
                fit.diagnostics.join("; ")
            ),
        ));
    }
    if let Some(e) = expect {
        let values: BTreeMap<&str, f64> = FANO_KEYS
            .iter()
            .copied()
            .zip([
                fit.q.re,
                fit.q.im,
                fit.pi_strength,
                width_gamma,
                shift_gamma,
                fit.a,
                fit.residual_rms,
            ])
            .collect();
        e.check(&values, None)?;
    }
    Ok(())
}

fn check_ok_fraction(fraction: f64, failed_errors: Vec<String>) -> CliResult<()> {
    if fraction < MIN_OK_FRACTION {
        return Err(CliError::new(
            EXIT_POINTS_FAILED,
            format!(
                "only {:.0}% of points succeeded; first failure: {}",
                fraction * 100.0,
                failed_errors
                    .first()
                    .map(String::as_str)
                    .unwrap_or("unknown")
            ),
        ));
    }
    Ok(())
}

fn fmt_pair(z: num_complex::Complex<f64>) -> String {
    format!("({} {})", fmt_num(z.re), fmt_num(z.im))
}

#[allow(clippy::too_many_arguments)]
pub fn trajectory(
    out: &Output,
    args: &SourceArgs,
    mode: SweepArg,
    theta_mrad: Option<f64>,
    abundance: f64,
    abundances: Option<Vec<f64>>,
    offsets: Option<Vec<f64>>,
    points: Option<usize>,
) -> CliResult<()> {
    let input = parse_source(args)?;
    let (abundances, offsets) = match mode {
        SweepArg::Abundance => {
            if offsets.is_some() || points.is_some() {
                return Err(CliError::usage(
                    "--offsets and --points apply to angle sweeps",
                ));
            }
            (abundance_grid(abundances)?, Vec::new())
        }
        SweepArg::Angle => {
            if abundances.is_some() || theta_mrad.is_some() {
                return Err(CliError::usage(
                    "angle sweeps take --abundance and --offsets/--points",
                ));
            }
            if !(0.0..=1.0).contains(&abundance) {
                return Err(CliError::usage("--abundance must lie in [0, 1]"));
            }
            (Vec::new(), offsets_urad(offsets, points)?)
        }
    };
    let source = build_q_source(args.source, input)?;
    let cavity = *source.cavity();
    let (traj, phi_e) = match mode {
        SweepArg::Abundance => {
            let theta = theta_mrad
                .map(|t| t * 1e-3)
                .unwrap_or(cavity.theta_mode + CALIBRATION_OFFSET);
            let phi_e = cavity_detuning(theta, &cavity)
                .and_then(|d| relative_phase(d, &cavity))
                .ok();
            (sweep_abundance(theta, &abundances, &source)?, phi_e)
        }
        SweepArg::Angle => {
            let rad: Vec<f64> = offsets.iter().map(|o| o * 1e-6).collect();
            let thetas = angles_from_offsets(&cavity, &rad);
            (sweep_angle(abundance, &thetas, &source)?, None)
        }
    };
    let pts = traj.ok_points();
    let line = fit_line(&pts).ok();
    let arc = match mode {
        SweepArg::Angle => fit_arc(&pts).ok(),
        SweepArg::Abundance => None,
    };
    let text = match out.format {
        Format::Json => json_text(json!({
            "trajectory": traj,
            "line": line,
            "arc": arc,
            "phi_e": phi_e,
        })),
        Format::Csv => {
            let mut s = trajectory_csv(&traj);
            if let Some(l) = &line {
                let _ = write!(
                    s,
                    "# line: anchor={} direction={} rms={} extent={} collinear={}",
                    fmt_pair(l.anchor),
                    fmt_num(l.direction),
                    fmt_num(l.rms),
                    fmt_num(l.extent),
                    l.is_collinear()
                );
                if let Some(p) = phi_e {
                    let _ = write!(s, " phi_e={}", fmt_num(p));
                }
                s.push('\n');
            }
            if let Some(a) = &arc {
                let _ = writeln!(
                    s,
                    "# arc: center={} radius={} rms={} distortion={}",
                    fmt_pair(a.center),
                    fmt_num(a.radius),
                    fmt_num(a.rms),
                    fmt_num(a.distortion)
                );
            }
            s
        }
    };
    out.write(&text)?;
    check_ok_fraction(traj.ok_fraction(), failures(&traj))
}

fn failures(t: &QTrajectory<f64>) -> Vec<String> {
    t.points.iter().filter_map(|p| p.error.clone()).collect()
}

pub fn surface(
    out: &Output,
    args: &SourceArgs,
    abundances: Option<Vec<f64>>,
    offsets: Option<Vec<f64>>,
    points: Option<usize>,
) -> CliResult<()> {
    let input = parse_source(args)?;
    let abundances = abundance_grid(abundances)?;
    let offsets = offsets_urad(offsets, points)?;
    let source = build_q_source(args.source, input)?;
    let rad: Vec<f64> = offsets.iter().map(|o| o * 1e-6).collect();
    let thetas = angles_from_offsets(source.cavity(), &rad);
    let s = q_surface(&thetas, &abundances, &source)?;
    let text = match out.format {
        Format::Json => json_text(
            serde_json::to_value(&s).map_err(|e| CliError::new(EXIT_USAGE, e.to_string()))?,
        ),
        Format::Csv => surface_csv(&s),
    };
    out.write(&text)?;
    let ok = s.cells.iter().filter(|c| c.ok).count() as f64 / s.cells.len().max(1) as f64;
    check_ok_fraction(ok, s.cells.iter().filter_map(|c| c.error.clone()).collect())
}
