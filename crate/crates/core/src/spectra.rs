//! Closed-form PSDs of the thermally driven oscillator with and without
//! delayed feedback, the peak frequency, the normalised PSD, `T_ratio` and
//! effective temperatures.
//!
//! `S_xx(ω) = Sγ / D(ω)` with
//! `D = [ω₀² − ω² + ωΓ_v sin ωτ + Γ_x f₀ cos ωτ]² + [ωγ + ωΓ_v cos ωτ − Γ_x f₀ sin ωτ]²`
//! and `S = 2k_BT/m`; `⟨x²⟩ = ∫ S_xx dω/2π` over the whole real line.
//! Fitted spectra use the same expression evaluated at `ω = 2πf` as a density
//! per Hz; its area over a band is what the fit tables report.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{FeedbackParams, OscillatorParams};
use crate::quadrature::adaptive_trapezoid;

/// Relative tolerance of band integrals.
pub const BAND_REL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectraError {
    #[error("no spectral peak: radicand {radicand} ≤ 0 or 1 − Γ̃_vτ̃ ≤ 0")]
    NoPeak { radicand: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Oscillator, feedback and overall scale `S` of the delayed-feedback PSD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPsdParams {
    pub osc: OscillatorParams,
    pub fb: FeedbackParams,
    /// `S`; `2k_BT/m` for the physical PSD.
    pub scale: f64,
}

impl AnalyticPsdParams {
    pub fn new(osc: OscillatorParams, fb: FeedbackParams) -> Self {
        Self {
            osc,
            fb,
            scale: osc.scale(),
        }
    }

    /// Denominator `D(ω)`.
    pub fn denominator(&self, omega: f64) -> f64 {
        let w0 = self.osc.omega0();
        let (s, c) = (omega * self.fb.tau_s).sin_cos();
        let gx = self.fb.gamma_x_hz * self.osc.f0_hz;
        let gv = self.fb.gamma_v_hz;
        let re = w0 * w0 - omega * omega + omega * gv * s + gx * c;
        let im = omega * self.osc.gamma_hz + omega * gv * c - gx * s;
        re * re + im * im
    }

    /// `Sγ/D(ω)`.
    pub fn eval(&self, omega: f64) -> f64 {
        self.scale * self.osc.gamma_hz / self.denominator(omega)
    }

    /// The same expression at `ω = 2πf`, as a density per Hz.
    pub fn model_hz(&self, f_hz: f64) -> f64 {
        self.eval(2.0 * PI * f_hz)
    }

    /// `∫ model_hz df` over `[f_lo, f_hi]`.
    pub fn model_area(&self, f_lo: f64, f_hi: f64) -> f64 {
        adaptive_trapezoid(|f| self.model_hz(f), f_lo, f_hi, &[self.osc.f0_hz], BAND_REL_TOL)
    }

    /// One-sided density per Hz, `2·model_hz`; integrates over `f ≥ 0` to
    /// the position variance, the same normalization as a Welch spectrum.
    pub fn one_sided_hz(&self, f_hz: f64) -> f64 {
        2.0 * self.model_hz(f_hz)
    }

    /// `∫ one_sided_hz df` over `[f_lo, f_hi]`.
    pub fn one_sided_area(&self, f_lo: f64, f_hi: f64) -> f64 {
        2.0 * self.model_area(f_lo, f_hi)
    }

    pub fn is_physical(&self) -> bool {
        delay_is_physical(self.fb.tau_tilde(self.osc.f0_hz))
    }
}

/// Delays within a quarter period of a whole number of periods; outside
/// this window the feedback heats without bound.
pub fn delay_is_physical(tau_tilde: f64) -> bool {
    (tau_tilde - tau_tilde.round()).abs() <= 0.25
}

/// Thermal PSD `(2γk_BT/m)/((ω₀²−ω²)² + (ωγ)²)` [m²·s].
pub fn psd_thermal(omega: f64, params: &OscillatorParams) -> f64 {
    AnalyticPsdParams::new(*params, FeedbackParams::none()).eval(omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayedPsd {
    pub value: f64,
    /// False outside the physical delay window.
    pub physical: bool,
}

/// Delayed-feedback PSD at `ω` with scale `S`.
pub fn psd_delayed(omega: f64, params: &OscillatorParams, fb: &FeedbackParams, scale: f64) -> DelayedPsd {
    let p = AnalyticPsdParams {
        osc: *params,
        fb: *fb,
        scale,
    };
    DelayedPsd {
        value: p.eval(omega),
        physical: p.is_physical(),
    }
}

/// Small-delay peak `ω̃_p = √(8π²c − (γ̃+Γ̃_v)²)/(√2 c)`, `c = 1 − Γ̃_vτ̃`,
/// returned in rad/s.
pub fn peak_frequency(params: &OscillatorParams, fb: &FeedbackParams) -> Result<f64, SpectraError> {
    let nu = params.f0_hz;
    let w = peak_frequency_tilde(params.gamma_tilde(), fb.gamma_v_hz / nu, fb.tau_tilde(nu))?;
    Ok(w * nu)
}

/// Dimensionless form of [`peak_frequency`].
pub fn peak_frequency_tilde(gamma_tilde: f64, gamma_v_tilde: f64, tau_tilde: f64) -> Result<f64, SpectraError> {
    let c = 1.0 - gamma_v_tilde * tau_tilde;
    let b = gamma_tilde + gamma_v_tilde;
    let radicand = 8.0 * PI * PI * c - b * b;
    if !(c > 0.0 && radicand > 0.0) {
        return Err(SpectraError::NoPeak { radicand });
    }
    Ok(radicand.sqrt() / (2.0_f64.sqrt() * c))
}

/// Dimensionless PSD `γ̃/D̃(ω̃)` in natural units (no position feedback).
pub fn psd_tilde(omega: f64, gamma_tilde: f64, gamma_v_tilde: f64, tau_tilde: f64) -> f64 {
    let (s, c) = (omega * tau_tilde).sin_cos();
    let re = 4.0 * PI * PI - omega * omega + omega * gamma_v_tilde * s;
    let im = omega * gamma_tilde + omega * gamma_v_tilde * c;
    gamma_tilde / (re * re + im * im)
}

/// `𝕊̃ = S̃·(2π)²(γ̃+Γ̃_v)/γ̃/(π/2)`, which has unit area over `ω̃ ≥ 0` for
/// instantaneous feedback.
pub fn normalized_psd(omega: f64, gamma_tilde: f64, gamma_v_tilde: f64, tau_tilde: f64) -> f64 {
    psd_tilde(omega, gamma_tilde, gamma_v_tilde, tau_tilde) * 4.0 * PI * PI * (gamma_tilde + gamma_v_tilde)
        / gamma_tilde
        / (PI / 2.0)
}

/// `∫ 𝕊̃ dω̃` over `band` (dimensionless angular frequencies).
pub fn normalized_area(gamma_tilde: f64, gamma_v_tilde: f64, tau_tilde: f64, band: (f64, f64)) -> f64 {
    let mut breaks = vec![2.0 * PI];
    if let Ok(p) = peak_frequency_tilde(gamma_tilde, gamma_v_tilde, tau_tilde) {
        breaks.push(p);
    }
    adaptive_trapezoid(
        |w| normalized_psd(w, gamma_tilde, gamma_v_tilde, tau_tilde),
        band.0,
        band.1,
        &breaks,
        BAND_REL_TOL,
    )
}

/// `f₀ ± half_width` [Hz] mapped to dimensionless angular frequency.
pub fn band_tilde(f0_hz: f64, half_width_hz: f64) -> (f64, f64) {
    let lo = (f0_hz - half_width_hz).max(0.0);
    (2.0 * PI * lo / f0_hz, 2.0 * PI * (f0_hz + half_width_hz) / f0_hz)
}

/// `T_ratio = log₁₀(∫_band 𝕊̃(τ̃) / ∫_band 𝕊̃(0))`: band power relative to
/// instantaneous feedback, exactly 0 at `τ̃ = 0`.
pub fn t_ratio(gamma_tilde: f64, gamma_v_tilde: f64, tau_tilde: f64, band: (f64, f64)) -> f64 {
    let a = normalized_area(gamma_tilde, gamma_v_tilde, tau_tilde, band);
    let a0 = normalized_area(gamma_tilde, gamma_v_tilde, 0.0, band);
    (a / a0).log10()
}

/// `log₁₀ ∫_band 𝕊̃(τ̃) dω̃` without the band-truncation reference.
pub fn t_ratio_raw(gamma_tilde: f64, gamma_v_tilde: f64, tau_tilde: f64, band: (f64, f64)) -> f64 {
    normalized_area(gamma_tilde, gamma_v_tilde, tau_tilde, band).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TRatioPoint {
    pub tau_tilde: f64,
    pub t_ratio: f64,
    pub physical: bool,
}

/// `T_ratio` over a grid of delays, evaluated in parallel.
pub fn t_ratio_sweep(gamma_tilde: f64, gamma_v_tilde: f64, taus: &[f64], band: (f64, f64)) -> Vec<TRatioPoint> {
    let a0 = normalized_area(gamma_tilde, gamma_v_tilde, 0.0, band);
    taus.par_iter()
        .map(|&tau| TRatioPoint {
            tau_tilde: tau,
            t_ratio: (normalized_area(gamma_tilde, gamma_v_tilde, tau, band) / a0).log10(),
            physical: delay_is_physical(tau),
        })
        .collect()
}

/// `T_eff = T_ref·A_fb/A_ref`.
pub fn effective_temperature(area_fb: f64, area_ref: f64, t_ref: f64) -> Result<f64, SpectraError> {
    if !(area_fb > 0.0 && area_ref > 0.0) {
        return Err(SpectraError::InvalidInput("areas must be positive".into()));
    }
    Ok(t_ref * area_fb / area_ref)
}

/// Theory-only form `T_ref·γ̃/(γ̃+Γ̃_v)·10^{T_ratio}`; at zero delay it
/// equals the area-ratio form.
pub fn effective_temperature_theory(t_ref: f64, gamma_tilde: f64, gamma_v_tilde: f64, t_ratio: f64) -> f64 {
    t_ref * gamma_tilde / (gamma_tilde + gamma_v_tilde) * 10f64.powf(t_ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureReport {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub area: f64,
    pub area_ref: f64,
    /// `log₁₀(area/area_ref)`.
    pub t_ratio: f64,
    pub t_ref_k: f64,
    pub t_eff_k: f64,
}

impl TemperatureReport {
    pub fn from_areas(band: (f64, f64), area: f64, area_ref: f64, t_ref: f64) -> Result<Self, SpectraError> {
        if !(band.0 < band.1) {
            return Err(SpectraError::InvalidInput("band must satisfy f_min < f_max".into()));
        }
        Ok(Self {
            f_min_hz: band.0,
            f_max_hz: band.1,
            area,
            area_ref,
            t_ratio: (area / area_ref).log10(),
            t_ref_k: t_ref,
            t_eff_k: effective_temperature(area, area_ref, t_ref)?,
        })
    }

    /// Areas of two model PSDs over the same band.
    pub fn from_models(
        band: (f64, f64),
        model: &AnalyticPsdParams,
        reference: &AnalyticPsdParams,
        t_ref: f64,
    ) -> Result<Self, SpectraError> {
        Self::from_areas(band, model.model_area(band.0, band.1), reference.model_area(band.0, band.1), t_ref)
    }
}

pub fn write_t_ratio_csv<W: Write>(mut w: W, points: &[TRatioPoint]) -> std::io::Result<()> {
    writeln!(w, "tau_tilde,t_ratio")?;
    for p in points {
        writeln!(w, "{:?},{:?}", p.tau_tilde, p.t_ratio)?;
    }
    Ok(())
}

pub fn write_psd_model_csv<W: Write>(mut w: W, f_hz: &[f64], psd: &[f64]) -> std::io::Result<()> {
    writeln!(w, "f_hz,psd_model")?;
    for (f, p) in f_hz.iter().zip(psd) {
        writeln!(w, "{f:?},{p:?}")?;
    }
    Ok(())
}
