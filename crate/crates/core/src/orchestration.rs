//! End-to-end studies: orientation landscapes, the delayed-feedback cooling
//! study and the delay sweep. Each study writes its files into the
//! configured output directory; every file carries the config hash.

use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{default_burn_in, simulate, DynamicsError, FeedbackParams, OscillatorParams, SimConfig};
use crate::fitting::{
    fit_delayed, fit_thermal, FitConstraints, FitError, FitOptions, FitParams, FitReportRow, FitResult,
    REPORT_COLUMNS,
};
use crate::levitation::{
    angular_distance_mod_quarter, equilibrium, find_preset, landscape, EnergyOptions, LevitationError,
    NondimensionalScales, SearchBox,
};
use crate::magnetostatics::{MagnetArraySpec, DEFAULT_MAGNETIZATION, DEFAULT_MAGNET_SIDE};
use crate::signal::{welch_psd, SignalError, Spectrum, WelchOptions};
use crate::spectra::{band_tilde, t_ratio_sweep, write_t_ratio_csv, AnalyticPsdParams, SpectraError};

/// `γ̃` of the low-pressure ringdown (`γ = 2κ`, `κ = 3.7×10⁻⁴ Hz`).
pub const HIGH_Q_GAMMA_TILDE: f64 = 2.0 * 3.7e-4 / 18.961;

#[derive(Debug, Error)]
pub enum OrchestrationError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Levitation(#[from] LevitationError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrientationConfig {
    pub materials: Vec<String>,
    pub l_tilde: Vec<f64>,
    pub quad_order: usize,
    /// Landscape grid `(n_z, n_φ)`.
    pub resolution: (usize, usize),
    pub z_range: (f64, f64),
}

impl Default for OrientationConfig {
    fn default() -> Self {
        Self {
            materials: vec!["hopg_supp".into(), "composite".into(), "composite_hopg_density".into()],
            l_tilde: vec![0.5, 0.75, 1.0],
            quad_order: 32,
            resolution: (39, 25),
            z_range: (0.02, 0.4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoolingConfig {
    pub gamma_v_tilde: f64,
    pub tau_tilde: Vec<f64>,
    pub duration_periods: f64,
    /// Welch segment length [s].
    pub segment_s: f64,
}

impl Default for CoolingConfig {
    fn default() -> Self {
        Self {
            gamma_v_tilde: 0.08,
            tau_tilde: vec![8.0, 10.0, 12.0, 7.9, 8.1],
            duration_periods: 40_000.0,
            segment_s: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub gamma_v_tilde: f64,
    pub tau_max: f64,
    /// Grid step of the analytic curve.
    pub tau_step: f64,
    /// Grid step of the simulation markers.
    pub marker_step: f64,
    pub duration_periods: f64,
    pub segment_s: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            gamma_v_tilde: 0.5,
            tau_max: 3.0,
            tau_step: 0.01,
            marker_step: 0.1,
            duration_periods: 2000.0,
            segment_s: 20.0,
        }
    }
}

/// Scenario manifest shared by all studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub f0_hz: f64,
    pub mass_kg: f64,
    pub temperature_k: f64,
    pub gamma_tilde: f64,
    pub steps_per_period: f64,
    pub seed: u64,
    /// Discarded start of every run [periods]; `None` uses
    /// [`default_burn_in`].
    pub burn_in_periods: Option<f64>,
    /// Analysis band `f₀ ± band_half_width_hz`.
    pub band_half_width_hz: f64,
    pub orientation: OrientationConfig,
    pub cooling: CoolingConfig,
    pub sweep: SweepConfig,
    /// Not part of the config hash.
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            f0_hz: 18.9,
            mass_kg: 50e-6,
            temperature_k: 300.0,
            gamma_tilde: 0.01,
            steps_per_period: 100.0,
            seed: 0,
            burn_in_periods: None,
            band_half_width_hz: 5.0,
            orientation: OrientationConfig::default(),
            cooling: CoolingConfig::default(),
            sweep: SweepConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, OrchestrationError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, OrchestrationError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Low damping, Q ≈ 1.6e5. The cooling runs are lengthened so the burn-in
    /// still covers the `1/γ̃` relaxation.
    pub fn with_high_q(mut self) -> Self {
        self.gamma_tilde = HIGH_Q_GAMMA_TILDE;
        self.cooling.duration_periods = self.cooling.duration_periods.max(100.0 / HIGH_Q_GAMMA_TILDE);
        self
    }

    pub fn validate(&self) -> Result<(), OrchestrationError> {
        let bad = |m: &str| Err(OrchestrationError::Config(m.to_string()));
        for m in &self.orientation.materials {
            find_preset(m)?;
        }
        if !(self.f0_hz > 0.0 && self.mass_kg > 0.0 && self.temperature_k > 0.0 && self.gamma_tilde > 0.0) {
            return bad("f0_hz, mass_kg, temperature_k and gamma_tilde must be positive");
        }
        if !(self.steps_per_period >= 50.0) {
            return bad("steps_per_period must be at least 50");
        }
        let nyquist = 0.5 * self.f0_hz * self.steps_per_period;
        if !(self.band_half_width_hz > 0.0 && self.f0_hz + self.band_half_width_hz < nyquist) {
            return bad("analysis band must be non-empty and below Nyquist");
        }
        if let Some(b) = self.burn_in_periods {
            if !(b >= 0.0) {
                return bad("burn_in_periods must be non-negative");
            }
        }
        let o = &self.orientation;
        if o.l_tilde.iter().any(|l| !(*l > 0.0)) || o.quad_order < 2 {
            return bad("orientation needs positive L̃ and quad_order ≥ 2");
        }
        if o.resolution.0 < 3 || o.resolution.1 < 2 || !(o.z_range.0 > 0.0 && o.z_range.1 > o.z_range.0) {
            return bad("orientation grid must have ≥ 3×2 points over a positive z̃ range");
        }
        for (name, gv, taus, dur, seg) in [
            ("cooling", self.cooling.gamma_v_tilde, &self.cooling.tau_tilde, self.cooling.duration_periods, self.cooling.segment_s),
            ("sweep", self.sweep.gamma_v_tilde, &vec![self.sweep.tau_max], self.sweep.duration_periods, self.sweep.segment_s),
        ] {
            if !(gv >= 0.0) || taus.iter().any(|t| !(*t >= 0.0)) {
                return bad(&format!("{name}: gains and delays must be non-negative"));
            }
            if !(seg > 0.0 && seg * self.f0_hz < dur) {
                return bad(&format!("{name}: the Welch segment must be shorter than the run"));
            }
        }
        if !(self.sweep.tau_step > 0.0 && self.sweep.marker_step > 0.0) {
            return bad("sweep steps must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, with `output_dir` cleared.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn oscillator(&self) -> OscillatorParams {
        OscillatorParams::from_tilde(self.gamma_tilde, self.f0_hz, self.mass_kg, self.temperature_k)
    }

    pub fn band(&self) -> (f64, f64) {
        ((self.f0_hz - self.band_half_width_hz).max(0.0), self.f0_hz + self.band_half_width_hz)
    }

    fn sim_config(&self, duration_periods: f64, seed: u64) -> SimConfig {
        SimConfig {
            dt_s: 1.0 / (self.steps_per_period * self.f0_hz),
            ..SimConfig::new(self.f0_hz, duration_periods / self.f0_hz, seed)
        }
    }

    fn burn_in_samples(&self, duration_periods: f64) -> usize {
        let b = self
            .burn_in_periods
            .unwrap_or_else(|| default_burn_in(self.gamma_tilde, duration_periods));
        (b * self.steps_per_period).round() as usize
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, OrchestrationError> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn create_csv(dir: &Path, name: &str, hash: &str) -> Result<BufWriter<File>, OrchestrationError> {
    let mut w = create(dir, name)?;
    writeln!(w, "# config_hash: {hash}")?;
    Ok(w)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, OrchestrationError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(dir.join(name))
}

/// Simulates and returns the Welch PSD of the post-burn-in record, or
/// `None` on blow-up.
fn simulate_psd(
    cfg: &ExperimentConfig,
    osc: &OscillatorParams,
    fb: &FeedbackParams,
    duration_periods: f64,
    segment_s: f64,
    seed: u64,
) -> Result<Option<Spectrum>, OrchestrationError> {
    let out = simulate(osc, fb, &cfg.sim_config(duration_periods, seed))?;
    if out.blew_up() {
        return Ok(None);
    }
    let traj = out.trajectory.skip(cfg.burn_in_samples(duration_periods));
    let nperseg = (segment_s * traj.fs).round() as usize;
    Ok(Some(welch_psd(&traj, &WelchOptions::new(nperseg))?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationRow {
    pub material: String,
    pub l_tilde: f64,
    pub z_tilde: f64,
    pub phi: f64,
    /// `"pi/4"` or `"0"`: the nearer orientation class mod π/2.
    pub phi_class: String,
    pub energy: f64,
    pub landscape_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationSummary {
    pub config_hash: String,
    pub name: String,
    pub quad_order: usize,
    pub rows: Vec<OrientationRow>,
}

/// Landscapes and equilibria for every material and `L̃`.
pub fn run_orientation_study(cfg: &ExperimentConfig) -> Result<OrientationSummary, OrchestrationError> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    let o = &cfg.orientation;
    let array = MagnetArraySpec::new(DEFAULT_MAGNET_SIDE, DEFAULT_MAGNETIZATION);
    let opts = EnergyOptions::with_order(o.quad_order);
    let cases: Vec<(String, f64)> = o
        .materials
        .iter()
        .flat_map(|m| o.l_tilde.iter().map(move |&l| (m.clone(), l)))
        .collect();
    let rows = cases
        .par_iter()
        .map(|(material, l)| -> Result<OrientationRow, OrchestrationError> {
            let preset = find_preset(material)?;
            let scales = NondimensionalScales::with_hopg_reference(&preset.plate, &array)?;
            let search = SearchBox {
                z_range: o.z_range,
                ..SearchBox::default()
            };
            let eq = equilibrium(&scales, *l, &search, &opts)?;
            let land = landscape(&scales, material, *l, o.z_range, (0.0, FRAC_PI_2), o.resolution, &opts)?;
            let file = format!("landscape_{material}_L{l}.csv");
            let mut w = create_csv(&cfg.output_dir, &file, &hash)?;
            land.write_csv(&mut w)?;
            w.flush()?;
            let class = if angular_distance_mod_quarter(eq.phi, FRAC_PI_2 / 2.0) < angular_distance_mod_quarter(eq.phi, 0.0) {
                "pi/4"
            } else {
                "0"
            };
            Ok(OrientationRow {
                material: material.clone(),
                l_tilde: *l,
                z_tilde: eq.z_tilde,
                phi: eq.phi,
                phi_class: class.into(),
                energy: eq.energy,
                landscape_file: file,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = OrientationSummary {
        config_hash: hash,
        name: cfg.name.clone(),
        quad_order: o.quad_order,
        rows,
    };
    write_json(&cfg.output_dir, "orientation_summary.json", &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioStatus {
    Completed,
    BlewUp,
    FitFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingRow {
    pub scenario: String,
    pub gamma_v_tilde: f64,
    pub tau_tilde: f64,
    pub status: ScenarioStatus,
    pub fit: Option<FitReportRow>,
    /// Peak of the measured PSD inside the band [Hz].
    pub peak_hz: Option<f64>,
    /// From fitted-model areas.
    pub t_eff_k: Option<f64>,
    /// From Welch band powers.
    pub t_eff_welch_k: Option<f64>,
    /// From the analytic PSDs at the nominal parameters.
    pub t_eff_theory_k: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingReport {
    pub config_hash: String,
    pub name: String,
    pub band_hz: (f64, f64),
    pub t_ref_k: f64,
    pub rows: Vec<CoolingRow>,
}

impl CoolingReport {
    pub fn row(&self, scenario: &str) -> Option<&CoolingRow> {
        self.rows.iter().find(|r| r.scenario == scenario)
    }
}

fn write_psd(cfg: &ExperimentConfig, hash: &str, name: &str, s: &Spectrum) -> Result<(), OrchestrationError> {
    let mut w = create_csv(&cfg.output_dir, &format!("psd_{name}.csv"), hash)?;
    s.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cooling_row(
    scenario: String,
    gv: f64,
    tau: f64,
    fit: Result<FitResult, FitError>,
    spectrum: &Spectrum,
    reference: (&FitResult, f64),
    t_ref: f64,
    theory: f64,
) -> CoolingRow {
    let band = reference.0.band;
    let (fit_row, t_eff, error, status) = match fit {
        Ok(f) => {
            let t = crate::spectra::effective_temperature(f.area, reference.0.area, t_ref).ok();
            (Some(FitReportRow::from(&f)), t, None, ScenarioStatus::Completed)
        }
        Err(e) => (None, None, Some(e.to_string()), ScenarioStatus::FitFailed),
    };
    CoolingRow {
        scenario,
        gamma_v_tilde: gv,
        tau_tilde: tau,
        status,
        fit: fit_row,
        peak_hz: spectrum.peak_frequency(band.0, band.1),
        t_eff_k: t_eff,
        t_eff_welch_k: Some(t_ref * spectrum.band_power(band.0, band.1) / reference.1),
        t_eff_theory_k: theory,
        error,
    }
}

/// Writes the cooling fit table: `scenario,status` followed by the fit
/// columns, empty where no fit exists.
pub fn write_cooling_table<W: Write>(w: W, rows: &[CoolingRow]) -> Result<(), csv::Error> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let mut header = vec!["scenario", "status"];
    header.extend(REPORT_COLUMNS);
    wr.write_record(&header)?;
    for r in rows {
        let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let mut rec = vec![r.scenario.clone(), status];
        match &r.fit {
            Some(f) => rec.extend(f.cells()),
            None => rec.extend(std::iter::repeat_n(String::new(), REPORT_COLUMNS.len())),
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Feedback-off reference first (fixes `γ` and the reference area), then
/// every delay scenario: simulate, Welch, constrained delayed fit, area,
/// `T_eff`.
pub fn run_cooling_study(cfg: &ExperimentConfig) -> Result<CoolingReport, OrchestrationError> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    let c = &cfg.cooling;
    let osc = cfg.oscillator();
    let band = cfg.band();
    let opts = FitOptions::default();
    let t_ref = cfg.temperature_k;

    let ref_psd = simulate_psd(cfg, &osc, &FeedbackParams::none(), c.duration_periods, c.segment_s, cfg.seed)?
        .ok_or_else(|| OrchestrationError::Config("feedback-off reference run blew up".into()))?;
    write_psd(cfg, &hash, "reference", &ref_psd)?;
    let init = FitParams {
        scale: osc.scale(),
        gamma_hz: osc.gamma_hz,
        f0_hz: osc.f0_hz,
        tau_s: 0.0,
        gamma_v_hz: 0.0,
    };
    let ref_fit = fit_thermal(&ref_psd, band, Some(init), &opts)?;
    let ref_power = ref_psd.band_power(band.0, band.1);
    let ref_model = AnalyticPsdParams::new(osc, FeedbackParams::none());
    let ref_theory_area = ref_model.model_area(band.0, band.1);

    let mut rows = vec![cooling_row(
        "reference".into(),
        0.0,
        0.0,
        Ok(ref_fit.clone()),
        &ref_psd,
        (&ref_fit, ref_power),
        t_ref,
        t_ref,
    )];

    let scenario_rows = c
        .tau_tilde
        .par_iter()
        .enumerate()
        .map(|(i, &tau)| -> Result<CoolingRow, OrchestrationError> {
            let name = format!("tau{tau}");
            let fb = FeedbackParams::from_tilde(0.0, c.gamma_v_tilde, tau, cfg.f0_hz);
            let theory = t_ref * AnalyticPsdParams::new(osc, fb).model_area(band.0, band.1) / ref_theory_area;
            let seed = cfg.seed.wrapping_add(1 + i as u64);
            let Some(psd) = simulate_psd(cfg, &osc, &fb, c.duration_periods, c.segment_s, seed)? else {
                return Ok(CoolingRow {
                    scenario: name,
                    gamma_v_tilde: c.gamma_v_tilde,
                    tau_tilde: tau,
                    status: ScenarioStatus::BlewUp,
                    fit: None,
                    peak_hz: None,
                    t_eff_k: None,
                    t_eff_welch_k: None,
                    t_eff_theory_k: theory,
                    error: None,
                });
            };
            write_psd(cfg, &hash, &name, &psd)?;
            let f0 = ref_fit.params.f0_hz;
            let constraints = FitConstraints::delayed_protocol(ref_fit.params.gamma_hz, fb.tau_s, f0);
            let init = FitParams {
                scale: ref_fit.params.scale,
                gamma_hz: ref_fit.params.gamma_hz,
                f0_hz: f0,
                tau_s: fb.tau_s,
                gamma_v_hz: fb.gamma_v_hz,
            };
            let fit = fit_delayed(&psd, band, &constraints, init, &opts);
            Ok(cooling_row(name, c.gamma_v_tilde, tau, fit, &psd, (&ref_fit, ref_power), t_ref, theory))
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.extend(scenario_rows);

    let mut w = create_csv(&cfg.output_dir, "fit_table.csv", &hash)?;
    write_cooling_table(&mut w, &rows)?;
    w.flush()?;
    let report = CoolingReport {
        config_hash: hash,
        name: cfg.name.clone(),
        band_hz: band,
        t_ref_k: t_ref,
        rows,
    };
    write_json(&cfg.output_dir, "temperature_report.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepMarker {
    pub tau_tilde: f64,
    /// `log₁₀` of the simulated band power relative to the `τ̃ = 0` run;
    /// absent where the run blew up.
    pub t_ratio: Option<f64>,
    pub blew_up: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySweep {
    pub config_hash: String,
    pub gamma_tilde: f64,
    pub gamma_v_tilde: f64,
    pub curve: Vec<crate::spectra::TRatioPoint>,
    pub markers: Vec<SweepMarker>,
}

fn grid(max: f64, step: f64) -> Vec<f64> {
    let n = (max / step + 1e-9).floor() as usize;
    (0..=n).map(|i| (i as f64 * step * 1e12).round() / 1e12).collect()
}

/// Analytic `T_ratio(τ̃)` plus simulated markers; blow-ups are recorded as
/// flagged markers without a value.
pub fn run_delay_sweep(cfg: &ExperimentConfig) -> Result<DelaySweep, OrchestrationError> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    let s = &cfg.sweep;
    let osc = cfg.oscillator();
    let band = cfg.band();
    let curve = t_ratio_sweep(
        cfg.gamma_tilde,
        s.gamma_v_tilde,
        &grid(s.tau_max, s.tau_step),
        band_tilde(cfg.f0_hz, cfg.band_half_width_hz),
    );
    let powers = grid(s.tau_max, s.marker_step)
        .par_iter()
        .enumerate()
        .map(|(i, &tau)| -> Result<(f64, Option<f64>), OrchestrationError> {
            let fb = FeedbackParams::from_tilde(0.0, s.gamma_v_tilde, tau, cfg.f0_hz);
            let seed = cfg.seed.wrapping_add(i as u64);
            let psd = simulate_psd(cfg, &osc, &fb, s.duration_periods, s.segment_s, seed)?;
            Ok((tau, psd.map(|p| p.band_power(band.0, band.1))))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let p0 = powers[0]
        .1
        .ok_or_else(|| OrchestrationError::Config("zero-delay reference run blew up".into()))?;
    let markers: Vec<SweepMarker> = powers
        .iter()
        .map(|&(tau, p)| SweepMarker {
            tau_tilde: tau,
            t_ratio: p.map(|p| (p / p0).log10()),
            blew_up: p.is_none(),
        })
        .collect();

    let mut w = create_csv(&cfg.output_dir, "t_ratio.csv", &hash)?;
    write_t_ratio_csv(&mut w, &curve)?;
    w.flush()?;
    let mut w = create_csv(&cfg.output_dir, "t_ratio_markers.csv", &hash)?;
    writeln!(w, "tau_tilde,t_ratio,blew_up")?;
    for m in &markers {
        let v = m.t_ratio.map(|v| format!("{v:?}")).unwrap_or_default();
        writeln!(w, "{:?},{},{}", m.tau_tilde, v, m.blew_up)?;
    }
    w.flush()?;
    let sweep = DelaySweep {
        config_hash: hash,
        gamma_tilde: cfg.gamma_tilde,
        gamma_v_tilde: s.gamma_v_tilde,
        curve,
        markers,
    };
    write_json(&cfg.output_dir, "delay_sweep.json", &sweep)?;
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            name: "quick".into(),
            output_dir: dir.to_path_buf(),
            orientation: OrientationConfig {
                materials: vec!["hopg_supp".into(), "composite".into()],
                l_tilde: vec![0.75],
                quad_order: 12,
                resolution: (5, 4),
                ..OrientationConfig::default()
            },
            cooling: CoolingConfig {
                tau_tilde: vec![8.0, 0.5],
                duration_periods: 6000.0,
                segment_s: 40.0,
                ..CoolingConfig::default()
            },
            sweep: SweepConfig {
                tau_max: 0.6,
                tau_step: 0.05,
                marker_step: 0.3,
                duration_periods: 800.0,
                ..SweepConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn hash_ignores_output_dir_and_tracks_content() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            output_dir: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.config_hash(), b.config_hash());
        let c = ExperimentConfig { seed: 1, ..a.clone() };
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let a = ExperimentConfig::default();
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), a);
        let partial = ExperimentConfig::from_json(r#"{"seed": 7, "cooling": {"gamma_v_tilde": 0.1}}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.cooling.tau_tilde, CoolingConfig::default().tau_tilde);
        assert!(ExperimentConfig::from_json(r#"{"sed": 7}"#).is_err());
        let mut bad = a.clone();
        bad.orientation.materials.push("unobtainium".into());
        assert!(matches!(bad.validate(), Err(OrchestrationError::Levitation(_))));
        let mut bad = a.clone();
        bad.band_half_width_hz = 1000.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn high_q_switches_damping() {
        let c = ExperimentConfig::default().with_high_q();
        assert!((c.gamma_tilde - 3.9e-5).abs() < 1e-6);
        assert!(c.cooling.duration_periods >= 100.0 / c.gamma_tilde);
    }

    #[test]
    fn orientation_study_classes_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick(dir.path());
        let s = run_orientation_study(&cfg).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.rows[0].phi_class, "pi/4");
        assert_eq!(s.rows[1].phi_class, "0");
        let csv = std::fs::read_to_string(dir.path().join(&s.rows[0].landscape_file)).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), format!("# config_hash: {}", cfg.config_hash()));
        assert_eq!(lines.next().unwrap(), "z_tilde,phi,U_tilde");
        assert_eq!(lines.count(), 20);
        let json = std::fs::read_to_string(dir.path().join("orientation_summary.json")).unwrap();
        assert!(json.contains(&cfg.config_hash()));
    }

    #[test]
    fn cooling_study_is_deterministic_and_records_blow_ups() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let r1 = run_cooling_study(&quick(d1.path())).unwrap();
        let r2 = run_cooling_study(&quick(d2.path())).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(read_dir(d1.path()), read_dir(d2.path()));

        let reference = r1.row("reference").unwrap();
        assert_eq!(reference.t_eff_k, Some(300.0));
        let cooled = r1.row("tau8").unwrap();
        assert_eq!(cooled.status, ScenarioStatus::Completed);
        let t = cooled.t_eff_k.unwrap();
        assert!((t / cooled.t_eff_theory_k - 1.0).abs() < 0.25, "{t} vs {}", cooled.t_eff_theory_k);
        assert_eq!(r1.row("tau0.5").unwrap().status, ScenarioStatus::BlewUp);

        let table = std::fs::read_to_string(d1.path().join("fit_table.csv")).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].starts_with("# config_hash: "));
        assert!(lines[1].starts_with("scenario,status,scale,S_err"));
        assert!(lines[4].starts_with("tau0.5,blew_up,,,"));
    }

    #[test]
    fn delay_sweep_markers() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_delay_sweep(&quick(dir.path())).unwrap();
        assert_eq!(s.curve.len(), 13);
        assert_eq!(s.curve[0].t_ratio, 0.0);
        let taus: Vec<f64> = s.markers.iter().map(|m| m.tau_tilde).collect();
        assert_eq!(taus, vec![0.0, 0.3, 0.6]);
        assert_eq!(s.markers[0].t_ratio, Some(0.0));
        assert!(s.markers[1].blew_up && s.markers[1].t_ratio.is_none());
        let csv = std::fs::read_to_string(dir.path().join("t_ratio_markers.csv")).unwrap();
        assert!(csv.contains("\n0.3,,true\n"));
    }
}
