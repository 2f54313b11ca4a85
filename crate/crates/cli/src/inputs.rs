use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use fano_cavity::layersim::{load_material_table, LayerStack, StackFile};
use fano_cavity::model::{
    CavityParams, NuclearEnsemble, Regime, DEFAULT_COUPLING_IN_GAMMA, DEFAULT_SUPERRADIANCE,
    FE57_LINEWIDTH,
};
use fano_cavity::trajectory::{OracleSetup, QSource, CALIBRATION_OFFSET};
use fano_cavity::Error;

use crate::{CliError, CliResult, Preset, SourceArgs, SourceKind, EXIT_EXPECT, EXIT_USAGE};

/// Cavity description in fit units: mrad and 10⁻²ω₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityFile {
    pub theta_mode_mrad: f64,
    pub kappa: f64,
    pub kappa_r: f64,
    #[serde(rename = "A", default = "one")]
    pub a: f64,
    #[serde(default)]
    pub phi: f64,
    /// On-mode collective width at full abundance, in natural linewidths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superradiance: Option<f64>,
    /// Effective nuclear number at full abundance (overrides `superradiance`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_ref: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl CavityFile {
    pub fn preset(p: Preset) -> Self {
        let (a, phi, theta, kappa, kappa_r) = match p {
            Preset::Overcritical => (0.77, -0.02, 2.338, 1.938, 1.667),
            Preset::Undercritical => (0.94, 0.038, 2.320, 0.7391, 0.2711),
        };
        Self {
            theta_mode_mrad: theta,
            kappa,
            kappa_r,
            a,
            phi,
            superradiance: None,
            n_ref: None,
        }
    }

    /// Reads a cavity file, or the `cavity` block of a fit-cavity result.
    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = read(path)?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| schema(path, e))?;
        let body = match value.get("kind").and_then(|k| k.as_str()) {
            Some("bare-cavity") => value.get("cavity").cloned().unwrap_or_default(),
            _ => value,
        };
        let c: Self = serde_json::from_value(body).map_err(|e| schema(path, e))?;
        c.cavity().map_err(|e| schema(path, e))?;
        Ok(c)
    }

    pub fn cavity(&self) -> fano_cavity::Result<CavityParams<f64>> {
        CavityParams::new(
            self.theta_mode_mrad * 1e-3,
            self.kappa * 1e-2,
            self.kappa_r * 1e-2,
        )
    }

    pub fn ensemble(&self) -> fano_cavity::Result<NuclearEnsemble<f64>> {
        let cavity = self.cavity()?;
        match self.n_ref {
            Some(n) => {
                let gamma = FE57_LINEWIDTH;
                NuclearEnsemble::new(gamma, gamma * DEFAULT_COUPLING_IN_GAMMA, n, 1.0)
            }
            None => {
                NuclearEnsemble::fe57(&cavity, self.superradiance.unwrap_or(DEFAULT_SUPERRADIANCE))
            }
        }
    }
}

pub fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn schema(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("{}: {e}", path.display()))
}

pub fn load_stack(path: &Path) -> CliResult<LayerStack<f64>> {
    let file = StackFile::from_path(path)?;
    let table = load_material_table().map_err(|e| match e {
        Error::Io(io) => CliError::usage(format!("material table: {io}")),
        other => other.into(),
    })?;
    file.build(&table).map_err(|e| schema(path, e))
}

/// Inputs named on the command line, parsed but not yet used.
pub enum SourceInput {
    Cavity(CavityFile),
    Stack(LayerStack<f64>),
}

/// Checks the source flags and parses the files they name.
pub fn parse_source(args: &SourceArgs) -> CliResult<SourceInput> {
    match args.source {
        SourceKind::Oracle => {
            if args.cavity.is_some() || args.preset.is_some() {
                return Err(CliError::usage(
                    "--source oracle takes --stack, not --cavity or --preset",
                ));
            }
            let path = args
                .stack
                .as_deref()
                .ok_or_else(|| CliError::usage("--source oracle needs --stack FILE"))?;
            Ok(SourceInput::Stack(load_stack(path)?))
        }
        SourceKind::Model => {
            if let Some(p) = &args.cavity {
                Ok(SourceInput::Cavity(CavityFile::from_path(p)?))
            } else if let Some(p) = args.preset {
                Ok(SourceInput::Cavity(CavityFile::preset(p)))
            } else if let Some(p) = &args.stack {
                Ok(SourceInput::Stack(load_stack(p)?))
            } else {
                Err(CliError::usage(
                    "model source needs --cavity FILE, --preset or --stack FILE",
                ))
            }
        }
    }
}

/// Same as [`parse_source`] but a missing cavity is allowed.
pub fn parse_optional_source(args: &SourceArgs) -> CliResult<Option<SourceInput>> {
    if args.source == SourceKind::Model
        && args.cavity.is_none()
        && args.preset.is_none()
        && args.stack.is_none()
    {
        return Ok(None);
    }
    parse_source(args).map(Some)
}

/// A q source ready to evaluate. Model sources built from a stack use the
/// fitted cavity and an n_ref matched to the oracle.
pub fn build_q_source(kind: SourceKind, input: SourceInput) -> CliResult<QSource<f64>> {
    match input {
        SourceInput::Cavity(c) => Ok(QSource::Model {
            cavity: c.cavity()?,
            ensemble: c.ensemble()?,
        }),
        SourceInput::Stack(stack) => {
            let setup = OracleSetup::from_stack(stack)?;
            match kind {
                SourceKind::Oracle => Ok(QSource::Oracle(Box::new(setup))),
                SourceKind::Model => {
                    let ensemble =
                        setup.calibrated_ensemble(setup.cavity.theta_mode + CALIBRATION_OFFSET)?;
                    Ok(QSource::Model {
                        cavity: setup.cavity,
                        ensemble,
                    })
                }
            }
        }
    }
}

/// Reference values for `--expect`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectFile {
    /// Allowed relative deviation.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    /// Allowed absolute deviation on top of the relative one.
    #[serde(default)]
    pub abs_tol: f64,
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
    #[serde(default)]
    pub regime: Option<Regime>,
}

fn default_rel_tol() -> f64 {
    1e-3
}

impl ExpectFile {
    pub fn from_path(path: &Path, known: &[&str]) -> CliResult<Self> {
        let e: Self = serde_json::from_str(&read(path)?).map_err(|e| schema(path, e))?;
        if let Some(k) = e.values.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(schema(
                path,
                format!("unknown value '{k}' (expected one of {known:?})"),
            ));
        }
        if !(e.rel_tol >= 0.0 && e.abs_tol >= 0.0) {
            return Err(schema(path, "tolerances must be non-negative"));
        }
        Ok(e)
    }

    pub fn check(&self, actual: &BTreeMap<&str, f64>, regime: Option<Regime>) -> CliResult<()> {
        let mut failures = Vec::new();
        for (name, &want) in &self.values {
            let got = actual[name.as_str()];
            if !((got - want).abs() <= self.rel_tol * want.abs() + self.abs_tol) {
                failures.push(format!("{name} = {got}, expected {want}"));
            }
        }
        if let (Some(want), Some(got)) = (self.regime, regime) {
            if want != got {
                failures.push(format!("regime = {got}, expected {want}"));
            }
        }
        if failures.is_empty() {
            Ok(())
        } else {
            Err(CliError::new(
                EXIT_EXPECT,
                format!("expectation not met: {}", failures.join("; ")),
            ))
        }
    }
}

/// Angle offsets in µrad: explicit list, `points` evenly spaced from −50 to
/// +46, or the default 25-point grid.
pub fn offsets_urad(offsets: Option<Vec<f64>>, points: Option<usize>) -> CliResult<Vec<f64>> {
    let v = match (offsets, points) {
        (Some(_), Some(_)) => return Err(CliError::usage("give either --offsets or --points")),
        (Some(v), None) => v,
        (None, Some(n)) => {
            if n < 2 {
                return Err(CliError::usage("--points must be at least 2"));
            }
            fano_cavity::grid::linspace(-50.0, 46.0, n)
        }
        (None, None) => fano_cavity::trajectory::default_offsets::<f64>()
            .into_iter()
            .map(|x| x * 1e6)
            .collect(),
    };
    if v.is_empty() {
        return Err(CliError::usage("empty angle grid"));
    }
    Ok(v)
}

pub fn abundance_grid(a: Option<Vec<f64>>) -> CliResult<Vec<f64>> {
    let v = a.unwrap_or_else(|| fano_cavity::trajectory::DEFAULT_ABUNDANCES.to_vec());
    if v.is_empty() {
        return Err(CliError::usage("empty abundance grid"));
    }
    if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(CliError::usage("abundances must lie in [0, 1]"));
    }
    Ok(v)
}

pub fn check_noise(noise: f64) -> CliResult<()> {
    if noise.is_finite() && noise >= 0.0 {
        Ok(())
    } else {
        Err(CliError::new(
            EXIT_USAGE,
            "--noise must be finite and non-negative",
        ))
    }
}
