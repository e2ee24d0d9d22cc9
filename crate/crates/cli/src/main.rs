//! `levkit` command-line interface.
//!
//! Arrays are written as CSV, scalars and metadata as JSON (or a one-row CSV
//! with `--format csv`). Exit codes: 0 success, 1 validation error, 2
//! numeric failure.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "levkit", version, about = "Levitated-plate trap modelling, feedback simulation and spectral analysis")]
pub struct Cli {
    /// JSON file: an experiment config for the study commands, flag values
    /// for the others. Flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output format for scalar results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Field map of the magnet array on a grid (CSV).
    Field(FieldArgs),
    /// Dimensionless energy landscape over (z̃, φ) (CSV).
    Landscape(LandscapeArgs),
    /// Equilibrium height and orientation of a plate.
    Equilibrium(EquilibriumArgs),
    /// Stochastic simulation with delayed feedback; exit 2 on blow-up.
    Simulate(SimulateArgs),
    /// Ringdown synthesis or fit, Q extraction.
    Ringdown(RingdownArgs),
    /// Welch PSD of a trajectory (CSV).
    Psd(PsdArgs),
    /// Band-pass FIR design and delay report.
    FilterDesign(FilterDesignArgs),
    /// Band-pass filter a trajectory (CSV).
    FilterApply(FilterApplyArgs),
    /// Fit a PSD to the thermal or delayed-feedback model.
    Fit(FitArgs),
    /// Analytic T_ratio curve over delay plus simulation markers.
    SweepDelay(StudyArgs),
    /// Delayed-feedback cooling study: PSDs, fit table, temperatures.
    CoolStudy(StudyArgs),
    /// Orientation landscapes and equilibria for all configured materials.
    OrientationStudy(StudyArgs),
    /// Effective temperature from PSD areas.
    Temperature(TemperatureArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldArgs {
    /// `lo:hi:n` along x.
    #[arg(long, default_value = "-1:1:21")]
    pub x: String,
    #[arg(long, default_value = "-1:1:21")]
    pub y: String,
    #[arg(long, default_value = "0.1:1:10")]
    pub z: String,
    /// `dimensionless` (positions in magnet sides, field in units of μ₀M) or
    /// `si` (metres, tesla).
    #[arg(long, default_value = "dimensionless")]
    pub units: String,
    /// Magnet side [m].
    #[arg(long, default_value_t = levkit::magnetostatics::DEFAULT_MAGNET_SIDE)]
    pub magnet_side: f64,
    /// Magnetisation [A/m].
    #[arg(long, default_value_t = levkit::magnetostatics::DEFAULT_MAGNETIZATION)]
    pub magnetization: f64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeArgs {
    #[arg(long, required_unless_present = "config")]
    pub material: Option<String>,
    /// Plate side over magnet side.
    #[arg(long = "L-tilde", id = "l_tilde", required_unless_present = "config")]
    pub l_tilde: Option<f64>,
    #[arg(long, default_value = "0.02:0.4")]
    pub z_range: String,
    #[arg(long, default_value = "0:1.5707963267948966")]
    pub phi_range: String,
    /// `n_z:n_phi`.
    #[arg(long, default_value = "39:25")]
    pub resolution: String,
    #[arg(long, default_value_t = 32)]
    pub quad_order: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumArgs {
    #[arg(long, required_unless_present = "config")]
    pub material: Option<String>,
    #[arg(long = "L-tilde", id = "l_tilde", required_unless_present = "config")]
    pub l_tilde: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub quad_order: usize,
    /// Search range in z̃, `lo:hi`.
    #[arg(long, default_value = "0.02:0.4")]
    pub z_range: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 18.9)]
    pub f0_hz: f64,
    #[arg(long, default_value_t = 50e-6)]
    pub mass_kg: f64,
    #[arg(long, default_value_t = 300.0)]
    pub temperature_k: f64,
    /// γ/f₀.
    #[arg(long, default_value_t = 0.01)]
    pub gamma_tilde: f64,
    /// Γ_v/f₀.
    #[arg(long, default_value_t = 0.0)]
    pub gammav_tilde: f64,
    /// Γ_x/f₀.
    #[arg(long, default_value_t = 0.0)]
    pub gammax_tilde: f64,
    /// f₀τ.
    #[arg(long, default_value_t = 0.0)]
    pub tau_tilde: f64,
    #[arg(long, default_value_t = 2000.0)]
    pub duration_periods: f64,
    #[arg(long, default_value_t = 100.0)]
    pub steps_per_period: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record every n-th step.
    #[arg(long, default_value_t = 1)]
    pub output_every: usize,
    #[arg(long)]
    pub record_velocity: bool,
    /// Trajectory CSV; a JSON sidecar is written next to it.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingdownArgs {
    /// Fit this trajectory instead of synthesising one.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 18.961)]
    pub f0_hz: f64,
    /// Amplitude decay constant κ [Hz]; the damping is γ = 2κ.
    #[arg(long, default_value_t = 3.7e-4)]
    pub kappa_hz: f64,
    /// Initial displacement [m].
    #[arg(long, default_value_t = 1e-6)]
    pub x0: f64,
    #[arg(long, default_value_t = 2000.0)]
    pub duration_periods: f64,
    #[arg(long, default_value_t = 100.0)]
    pub steps_per_period: f64,
    /// Save the synthesised trajectory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdArgs {
    #[arg(long, short, required_unless_present = "config")]
    pub input: Option<PathBuf>,
    /// Segment length [s]; ignored when `--nperseg` is given.
    #[arg(long, default_value_t = 20.0)]
    pub segment_s: f64,
    #[arg(long)]
    pub nperseg: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    #[arg(long, default_value = "hann")]
    pub window: String,
    /// Discarded start of the record [s].
    #[arg(long, default_value_t = 0.0)]
    pub burn_in_s: f64,
    #[arg(long)]
    pub no_detrend: bool,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterDesignArgs {
    /// Number of taps (odd).
    #[arg(long, default_value_t = 1001)]
    pub n: usize,
    /// Sampling rate [Hz].
    #[arg(long, default_value_t = 1250.0)]
    pub fs: f64,
    /// Pass band `lo:hi` [Hz].
    #[arg(long, default_value = "18:23")]
    pub band: String,
    /// Report the group delay in periods of this frequency [Hz].
    #[arg(long)]
    pub report_delay_at: Option<f64>,
    /// Coefficient CSV.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterApplyArgs {
    #[arg(long, short, required_unless_present = "config")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 1001)]
    pub n: usize,
    #[arg(long, default_value = "18:23")]
    pub band: String,
    /// Decimate by this factor before filtering.
    #[arg(long)]
    pub decimate: Option<usize>,
    /// Additional delay [samples].
    #[arg(long, default_value_t = 0.0)]
    pub extra_delay: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dc_shift: f64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Thermal,
    Delayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualArg {
    Log10,
    Linear,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// PSD CSV (`f_hz,psd`).
    #[arg(long, short, required_unless_present = "config")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelArg::Thermal)]
    pub model: ModelArg,
    /// Fit band `lo:hi` [Hz]; default: spectral peak ± 5 Hz.
    #[arg(long)]
    pub band: Option<String>,
    /// `name=value` with name in scale, gamma, f0, tau, gamma_v.
    #[arg(long)]
    pub fix: Vec<String>,
    /// `name=lo:hi`.
    #[arg(long)]
    pub bound: Vec<String>,
    /// `name=value` starting values.
    #[arg(long)]
    pub init: Vec<String>,
    #[arg(long, value_enum, default_value_t = ResidualArg::Log10)]
    pub residuals: ResidualArg,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyArgs {
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Low-damping preset (Q ≈ 1.6e5); much longer runtimes.
    #[arg(long)]
    pub high_q: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureArgs {
    /// Band area with feedback [m²].
    #[arg(long)]
    pub area: Option<f64>,
    /// Reference band area [m²].
    #[arg(long)]
    pub area_ref: Option<f64>,
    /// Fit JSON whose `area` is used when `--area` is absent.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long)]
    pub ref_fit: Option<PathBuf>,
    #[arg(long, default_value_t = 300.0)]
    pub t_ref: f64,
}

/// Overlays keys from the `--config` JSON onto `args` wherever the flag
/// was not given on the command line.
fn merge<T: Serialize + DeserializeOwned>(args: T, m: &ArgMatches, config: Option<&serde_json::Value>) -> Result<T, CliError> {
    let Some(cfg) = config else { return Ok(args) };
    let serde_json::Value::Object(overrides) = cfg else {
        return Err(CliError::Validation("--config must hold a JSON object".into()));
    };
    let mut current = serde_json::to_value(&args).map_err(CliError::validation)?;
    let obj = current.as_object_mut().expect("args serialise to an object");
    for (k, v) in overrides {
        if !obj.contains_key(k) {
            return Err(CliError::Validation(format!("unknown config key `{k}`")));
        }
        if m.value_source(k) != Some(clap::parser::ValueSource::CommandLine) {
            obj.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(current).map_err(|e| CliError::Validation(format!("config: {e}")))
}

fn run(cli: Cli, matches: &ArgMatches) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Validation("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::validation)?;
    }
    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand is required");
    let config_text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let config_json = match &config_text {
        Some(t) => Some(serde_json::from_str::<serde_json::Value>(t).map_err(|e| CliError::Validation(format!("config: {e}")))?),
        None => None,
    };
    let cfg = config_json.as_ref();
    let ctx = commands::Context {
        format: cli.format,
        print_config: cli.print_config,
    };
    match cli.command {
        Command::Field(a) => commands::field(&ctx, merge(a, sub, cfg)?),
        Command::Landscape(a) => commands::landscape(&ctx, merge(a, sub, cfg)?),
        Command::Equilibrium(a) => commands::equilibrium(&ctx, merge(a, sub, cfg)?),
        Command::Simulate(a) => commands::simulate(&ctx, merge(a, sub, cfg)?),
        Command::Ringdown(a) => commands::ringdown(&ctx, merge(a, sub, cfg)?),
        Command::Psd(a) => commands::psd(&ctx, merge(a, sub, cfg)?),
        Command::FilterDesign(a) => commands::filter_design(&ctx, merge(a, sub, cfg)?),
        Command::FilterApply(a) => commands::filter_apply(&ctx, merge(a, sub, cfg)?),
        Command::Fit(a) => commands::fit(&ctx, merge(a, sub, cfg)?),
        Command::Temperature(a) => commands::temperature(&ctx, merge(a, sub, cfg)?),
        Command::SweepDelay(a) => commands::study(&ctx, commands::Study::Sweep, a, config_text.as_deref()),
        Command::CoolStudy(a) => commands::study(&ctx, commands::Study::Cooling, a, config_text.as_deref()),
        Command::OrientationStudy(a) => commands::study(&ctx, commands::Study::Orientation, a, config_text.as_deref()),
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
