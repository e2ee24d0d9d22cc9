//! Least-squares fits of measured or simulated spectra to the thermal and
//! delayed-feedback PSD models, and fit tables.
//!
//! The fitted model is `P(f) = Sγ/D(2πf)` as a density per Hz (see
//! [`crate::spectra`]). `S` and `γ` are fitted through their logarithms;
//! `f₀`, `τ` and `Γ_v` directly. Residuals are `log₁₀ P − log₁₀ data` by
//! default.

pub mod lm;
mod report;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{FeedbackParams, OscillatorParams};
use crate::quadrature::adaptive_trapezoid;
use crate::signal::Spectrum;
use crate::spectra::AnalyticPsdParams;

pub use lm::{levenberg_marquardt, LmOptions, LmOutcome};
pub use report::{fit_report, read_report_csv, write_report_csv, write_report_json, FitReportRow, REPORT_COLUMNS};

/// Minimum number of spectral bins inside the analysis band.
pub const MIN_BAND_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("bad band: {0}")]
    BadBand(String),
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Scale,
    Gamma,
    F0,
    Tau,
    GammaV,
}

impl Param {
    pub const ALL: [Param; 5] = [Param::Scale, Param::Gamma, Param::F0, Param::Tau, Param::GammaV];

    /// Fitted through the logarithm.
    fn is_log(self) -> bool {
        matches!(self, Param::Scale | Param::Gamma)
    }
}

/// Full parameter vector of the PSD model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitParams {
    pub scale: f64,
    pub gamma_hz: f64,
    pub f0_hz: f64,
    pub tau_s: f64,
    pub gamma_v_hz: f64,
}

impl FitParams {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Scale => self.scale,
            Param::Gamma => self.gamma_hz,
            Param::F0 => self.f0_hz,
            Param::Tau => self.tau_s,
            Param::GammaV => self.gamma_v_hz,
        }
    }

    pub fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::Scale => self.scale = v,
            Param::Gamma => self.gamma_hz = v,
            Param::F0 => self.f0_hz = v,
            Param::Tau => self.tau_s = v,
            Param::GammaV => self.gamma_v_hz = v,
        }
    }

    pub fn model(&self) -> AnalyticPsdParams {
        AnalyticPsdParams {
            osc: OscillatorParams {
                f0_hz: self.f0_hz,
                gamma_hz: self.gamma_hz,
                mass_kg: 1.0,
                temperature_k: 0.0,
            },
            fb: FeedbackParams {
                gamma_x_hz: 0.0,
                gamma_v_hz: self.gamma_v_hz,
                tau_s: self.tau_s,
            },
            scale: self.scale,
        }
    }

    /// `P(f)`.
    pub fn eval(&self, f_hz: f64) -> f64 {
        self.model().model_hz(f_hz)
    }

    pub fn tau_periods(&self) -> f64 {
        self.tau_s * self.f0_hz
    }
}

/// Fixed values and box bounds, keyed by parameter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitConstraints {
    pub fixed: BTreeMap<Param, f64>,
    pub bounds: BTreeMap<Param, (f64, f64)>,
}

impl FitConstraints {
    pub fn validate(&self) -> Result<(), FitError> {
        for (p, (lo, hi)) in &self.bounds {
            if !(lo < hi) {
                return Err(FitError::ConstraintViolation(format!("bounds for {p:?} need lo < hi")));
            }
            if self.fixed.contains_key(p) {
                return Err(FitError::ConstraintViolation(format!("{p:?} is both fixed and bounded")));
            }
        }
        for (p, v) in &self.fixed {
            if !v.is_finite() {
                return Err(FitError::ConstraintViolation(format!("fixed {p:?} must be finite")));
            }
        }
        Ok(())
    }

    pub fn fix(mut self, p: Param, v: f64) -> Self {
        self.fixed.insert(p, v);
        self
    }

    pub fn bound(mut self, p: Param, lo: f64, hi: f64) -> Self {
        self.bounds.insert(p, (lo, hi));
        self
    }

    /// `γ` fixed, `τ` within one period of its nominal value and `Γ_v ≥ 0`.
    pub fn delayed_protocol(gamma_hz: f64, tau_nominal_s: f64, f0_hz: f64) -> Self {
        let period = 1.0 / f0_hz;
        Self::default()
            .fix(Param::Gamma, gamma_hz)
            .bound(Param::Tau, (tau_nominal_s - period).max(0.0), tau_nominal_s + period)
            .bound(Param::GammaV, 0.0, f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    Log10,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub residuals: ResidualKind,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            residuals: ResidualKind::Log10,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Thermal,
    Delayed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub params: FitParams,
    /// Standard errors; zero for fixed parameters and those outside the
    /// model.
    pub std_errors: FitParams,
    pub free: Vec<Param>,
    /// `√Σr²`.
    pub residual_norm: f64,
    pub band: (f64, f64),
    pub n_points: usize,
    pub area: f64,
    pub area_err: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Cost after each accepted step.
    pub cost_history: Vec<f64>,
}

impl FitResult {
    pub fn tau_periods(&self) -> Option<f64> {
        (self.model == ModelKind::Delayed).then(|| self.params.tau_periods())
    }
}

/// `f₀` at the spectral maximum, `γ = 2π·FWHM`, `S = P_max ω₀² γ`.
pub fn initial_guess(spectrum: &Spectrum, band: (f64, f64)) -> Result<FitParams, FitError> {
    let (f, p) = spectrum.band(band.0, band.1);
    if f.len() < MIN_BAND_BINS {
        return Err(FitError::BadBand(format!("{} bins in band, need {MIN_BAND_BINS}", f.len())));
    }
    let k = (0..p.len())
        .max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap())
        .unwrap();
    let half = 0.5 * p[k];
    let cross = |range: &mut dyn Iterator<Item = usize>, step: isize| -> f64 {
        for i in range {
            if p[i] < half {
                let j = (i as isize - step) as usize;
                return f[i] + (half - p[i]) * (f[j] - f[i]) / (p[j] - p[i]);
            }
        }
        if step > 0 { f[0] } else { f[f.len() - 1] }
    };
    let left = cross(&mut (0..k).rev(), -1);
    let right = cross(&mut (k + 1..f.len()), 1);
    let fwhm = (right - left).max(spectrum.bin_width());
    let gamma = 2.0 * std::f64::consts::PI * fwhm;
    let w0 = 2.0 * std::f64::consts::PI * f[k];
    Ok(FitParams {
        scale: p[k] * w0 * w0 * gamma,
        gamma_hz: gamma,
        f0_hz: f[k],
        tau_s: 0.0,
        gamma_v_hz: 0.0,
    })
}

fn band_data(spectrum: &Spectrum, band: (f64, f64), kind: ResidualKind) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    if !(band.0 < band.1) {
        return Err(FitError::BadBand("band must satisfy f_lo < f_hi".into()));
    }
    let (f, p) = spectrum.band(band.0, band.1);
    if f.len() < MIN_BAND_BINS {
        return Err(FitError::BadBand(format!("{} bins in band, need {MIN_BAND_BINS}", f.len())));
    }
    if kind == ResidualKind::Log10 && p.iter().any(|&v| !(v > 0.0)) {
        return Err(FitError::BadBand("log residuals need positive PSD values".into()));
    }
    Ok((f, p))
}

fn to_internal(p: Param, v: f64) -> f64 {
    if p.is_log() {
        v.ln()
    } else {
        v
    }
}

fn to_external(p: Param, v: f64) -> f64 {
    if p.is_log() {
        v.exp()
    } else {
        v
    }
}

fn fit_model(
    spectrum: &Spectrum,
    band: (f64, f64),
    model: ModelKind,
    constraints: &FitConstraints,
    init: FitParams,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    constraints.validate()?;
    let (freqs, data) = band_data(spectrum, band, opts.residuals)?;
    let in_model: &[Param] = match model {
        ModelKind::Thermal => &[Param::Scale, Param::Gamma, Param::F0],
        ModelKind::Delayed => &Param::ALL,
    };
    for p in constraints.fixed.keys().chain(constraints.bounds.keys()) {
        if !in_model.contains(p) {
            return Err(FitError::ConstraintViolation(format!("{p:?} is not a parameter of the {model:?} model")));
        }
    }
    let mut base = init;
    if model == ModelKind::Thermal {
        base.tau_s = 0.0;
        base.gamma_v_hz = 0.0;
    }
    for (p, v) in &constraints.fixed {
        base.set(*p, *v);
    }
    let free: Vec<Param> = in_model.iter().copied().filter(|p| !constraints.fixed.contains_key(p)).collect();
    if free.is_empty() {
        return Err(FitError::ConstraintViolation("no free parameters".into()));
    }
    if base.scale <= 0.0 || base.gamma_hz <= 0.0 || base.f0_hz <= 0.0 {
        return Err(FitError::ConstraintViolation("S, γ and f₀ must be positive".into()));
    }

    let bound = |p: Param| -> (f64, f64) {
        let (lo, hi) = constraints.bounds.get(&p).copied().unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        if p.is_log() {
            (if lo > 0.0 { lo.ln() } else { f64::NEG_INFINITY }, if hi.is_finite() { hi.ln() } else { f64::INFINITY })
        } else {
            (lo, hi)
        }
    };
    let lower: Vec<f64> = free.iter().map(|&p| bound(p).0).collect();
    let upper: Vec<f64> = free.iter().map(|&p| bound(p).1).collect();
    let x0: Vec<f64> = free.iter().map(|&p| to_internal(p, base.get(p))).collect();

    let assemble = |x: &[f64]| {
        let mut q = base;
        for (p, v) in free.iter().zip(x) {
            q.set(*p, to_external(*p, *v));
        }
        q
    };
    let residuals = |x: &[f64]| -> Option<Vec<f64>> {
        let q = assemble(x);
        let m = q.model();
        let r: Vec<f64> = freqs
            .iter()
            .zip(&data)
            .map(|(&f, &d)| {
                let v = m.model_hz(f);
                match opts.residuals {
                    ResidualKind::Log10 => v.log10() - d.log10(),
                    ResidualKind::Linear => v - d,
                }
            })
            .collect();
        r.iter().all(|v| v.is_finite()).then_some(r)
    };

    let lm_opts = LmOptions {
        max_iterations: opts.max_iterations,
        ..LmOptions::default()
    };
    let out = levenberg_marquardt(residuals, &x0, &lower, &upper, &lm_opts)
        .ok_or_else(|| FitError::BadBand("model is not finite at the initial guess".into()))?;
    if !out.converged {
        return Err(FitError::NoConvergence { iterations: out.iterations });
    }
    let params = assemble(&out.x);

    let n = freqs.len();
    let k = free.len();
    let dof = n.saturating_sub(k).max(1) as f64;
    let s2 = out.cost / dof;
    let jtj = out.jacobian.transpose() * &out.jacobian;
    let cov = jtj.try_inverse().map(|c| c * s2).unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));

    let mut std_errors = FitParams::default();
    for (i, &p) in free.iter().enumerate() {
        let s = cov[(i, i)].max(0.0).sqrt();
        std_errors.set(p, if p.is_log() { params.get(p) * s } else { s });
    }

    let area_of = |q: &FitParams| {
        let m = q.model();
        adaptive_trapezoid(|f| m.model_hz(f), band.0, band.1, &[q.f0_hz], 1e-9)
    };
    let area = area_of(&params);
    let mut grad = vec![0.0; k];
    for i in 0..k {
        let h = 1e-6 * out.x[i].abs().max(1e-3);
        let mut xp = out.x.clone();
        xp[i] += h;
        let mut xm = out.x.clone();
        xm[i] -= h;
        grad[i] = (area_of(&assemble(&xp)) - area_of(&assemble(&xm))) / (2.0 * h);
    }
    let mut var_a = 0.0;
    for i in 0..k {
        for j in 0..k {
            var_a += grad[i] * cov[(i, j)] * grad[j];
        }
    }

    Ok(FitResult {
        model,
        params,
        std_errors,
        free,
        residual_norm: out.cost.sqrt(),
        band,
        n_points: n,
        area,
        area_err: var_a.max(0.0).sqrt(),
        converged: out.converged,
        iterations: out.iterations,
        cost_history: out.history,
    })
}

/// Fits the thermal model `(S, γ, f₀)`. Without `init` the starting point
/// comes from [`initial_guess`].
pub fn fit_thermal(
    spectrum: &Spectrum,
    band: (f64, f64),
    init: Option<FitParams>,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let init = match init {
        Some(p) => p,
        None => initial_guess(spectrum, band)?,
    };
    fit_model(spectrum, band, ModelKind::Thermal, &FitConstraints::default(), init, opts)
}

/// Fits the delayed-feedback model under `constraints`, starting at `init`.
pub fn fit_delayed(
    spectrum: &Spectrum,
    band: (f64, f64),
    constraints: &FitConstraints,
    init: FitParams,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    for (p, (lo, hi)) in &constraints.bounds {
        let v = init.get(*p);
        if v < *lo || v > *hi {
            return Err(FitError::ConstraintViolation(format!("initial {p:?} = {v} outside [{lo}, {hi}]")));
        }
    }
    fit_model(spectrum, band, ModelKind::Delayed, constraints, init, opts)
}

/// Spectrum holding `P(f)` from `params` on `[0, f_max]` with spacing `df`,
/// optionally multiplied by `1 + noise·N(0,1)` noise (clamped positive).
pub fn synthetic_spectrum(params: &FitParams, df: f64, f_max: f64, noise: f64, seed: u64) -> Spectrum {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = (f_max / df).round() as usize + 1;
    let frequencies: Vec<f64> = (0..n).map(|i| i as f64 * df).collect();
    let values = frequencies
        .iter()
        .map(|&f| {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v = params.eval(f) * (1.0 + noise * e);
            v.max(1e-300)
        })
        .collect();
    let nperseg = 2 * (n - 1);
    Spectrum {
        frequencies,
        values,
        fs: df * nperseg as f64,
        nperseg,
        overlap: 0.0,
        window: crate::signal::Window::Rectangular,
        segments: 0,
        units: "m^2/Hz".into(),
    }
}
