//! `fano-cavity`: simulate cavity spectra, fit them and trace q trajectories.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fano_cavity::Error;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_EXPECT: u8 = 4;
pub const EXIT_POINTS_FAILED: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Schema(_) | Error::Input(_) | Error::InvalidGrid(_) | Error::Io(_) => EXIT_USAGE,
            Error::Fit(_) | Error::Degenerate(_) => EXIT_NOT_CONVERGED,
            Error::Domain(_) | Error::Singularity(_) => EXIT_RUNTIME,
        };
        Self::new(code, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "fano-cavity",
    version,
    about = "Cavity reflectivity, Fano fits and complex-q trajectories"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Seed for synthetic noise.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print fit diagnostics to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKind {
    Model,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Overcritical,
    Undercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Over,
    Under,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepArg {
    Abundance,
    Angle,
}

/// Where the cavity (and, for the oracle, the whole stack) comes from.
#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    #[arg(long, value_enum, default_value_t = SourceKind::Model)]
    pub source: SourceKind,
    /// Layer stack JSON.
    #[arg(long)]
    pub stack: Option<PathBuf>,
    /// Cavity JSON (or the JSON output of fit-cavity).
    #[arg(long, conflicts_with = "preset")]
    pub cavity: Option<PathBuf>,
    /// Reference cavity parameters.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    /// Relative Gaussian noise added to every value.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bare-cavity rocking curve (theta_mrad, R2).
    BareScan {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 2001)]
        points: usize,
        #[arg(long, default_value_t = 2.0)]
        theta_min: f64,
        #[arg(long, default_value_t = 2.7)]
        theta_max: f64,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Spectrum around the nuclear resonance (energy_gamma, R2).
    EnergyScan {
        #[command(flatten)]
        source: SourceArgs,
        /// Grazing angle in mrad.
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        abundance: f64,
        #[arg(long, default_value_t = 4001)]
        points: usize,
        /// Half-width of the energy grid in natural linewidths.
        #[arg(long, default_value_t = 200.0)]
        span: f64,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Fit the bare-cavity model to a rocking curve.
    FitCavity {
        input: PathBuf,
        /// Coupling regime; the intensity alone does not fix it.
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
        /// Reference values to compare against.
        #[arg(long)]
        expect: Option<PathBuf>,
        /// Weight residuals by counting statistics.
        #[arg(long)]
        poisson: bool,
    },
    /// Fit the Fano lineshape to an energy spectrum.
    FitFano {
        input: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        /// Grazing angle in mrad (defaults to the scan's metadata).
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        expect: Option<PathBuf>,
        #[arg(long)]
        poisson: bool,
    },
    /// q versus abundance or angle, with a line or arc summary.
    Trajectory {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, value_enum, default_value_t = SweepArg::Abundance)]
        mode: SweepArg,
        /// Grazing angle in mrad for abundance sweeps.
        #[arg(long)]
        theta: Option<f64>,
        /// Abundance for angle sweeps.
        #[arg(long, default_value_t = 1.0)]
        abundance: f64,
        /// Abundance grid for abundance sweeps.
        #[arg(long, value_delimiter = ',')]
        abundances: Option<Vec<f64>>,
        /// Angle offsets from the mode in µrad.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        offsets: Option<Vec<f64>>,
        /// Number of evenly spaced offsets from −50 to +46 µrad.
        #[arg(long)]
        points: Option<usize>,
    },
    /// q over an (angle offset × abundance) grid.
    Surface {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, value_delimiter = ',')]
        abundances: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        offsets: Option<Vec<f64>>,
        #[arg(long)]
        points: Option<usize>,
    },
}

/// Output settings shared by all commands.
pub struct Output {
    pub path: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub verbose: bool,
}

impl Output {
    pub fn write(&self, text: &str) -> CliResult<()> {
        match &self.path {
            Some(p) => std::fs::write(p, text)
                .map_err(|e| CliError::new(EXIT_RUNTIME, format!("{}: {e}", p.display()))),
            None => {
                use std::io::Write;
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())
                    .and_then(|_| out.flush())
                    .map_err(|e| CliError::new(EXIT_RUNTIME, e.to_string()))
            }
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let out = Output {
        path: cli.out,
        format: cli.format,
        seed: cli.seed,
        verbose: cli.verbose,
    };
    match cli.command {
        Command::BareScan {
            source,
            points,
            theta_min,
            theta_max,
            noise,
        } => commands::bare_scan(&out, &source, points, theta_min, theta_max, noise.noise),
        Command::EnergyScan {
            source,
            theta,
            abundance,
            points,
            span,
            noise,
        } => commands::energy_scan(&out, &source, theta, abundance, points, span, noise.noise),
        Command::FitCavity {
            input,
            regime,
            expect,
            poisson,
        } => commands::fit_cavity(&out, &input, regime, expect.as_deref(), poisson),
        Command::FitFano {
            input,
            source,
            theta,
            expect,
            poisson,
        } => commands::fit_fano(&out, &input, &source, theta, expect.as_deref(), poisson),
        Command::Trajectory {
            source,
            mode,
            theta,
            abundance,
            abundances,
            offsets,
            points,
        } => commands::trajectory(
            &out, &source, mode, theta, abundance, abundances, offsets, points,
        ),
        Command::Surface {
            source,
            abundances,
            offsets,
            points,
        } => commands::surface(&out, &source, abundances, offsets, points),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fano-cavity: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        let c = |e: Error| CliError::from(e).code;
        assert_eq!(c(Error::Schema("x".into())), EXIT_USAGE);
        assert_eq!(c(Error::InvalidGrid("x".into())), EXIT_USAGE);
        assert_eq!(c(Error::Fit("x".into())), EXIT_NOT_CONVERGED);
        assert_eq!(c(Error::Domain("x".into())), EXIT_RUNTIME);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
