//! Thermally driven harmonic oscillator with delayed position/velocity
//! feedback, integrated in natural units.
//!
//! With `ν = f₀` and `ℓ = √(2k_BT/(mν²))` the equation of motion becomes
//! `x̃″ + γ̃x̃′ + (2π)²x̃ + Γ̃_x x̃(t̃−τ̃) + Γ̃_v x̃′(t̃−τ̃) = √γ̃ ξ̃(t̃)`.
//! `γ` is the coefficient of `ẋ`; the ringdown amplitude decays at
//! `κ = γ/2` and `Q = ω₀/γ = πf₀/κ`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::BOLTZMANN;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("only {found} envelope peaks found, need at least 10")]
    InsufficientPeaks { found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    /// Natural frequency `f₀` [Hz].
    pub f0_hz: f64,
    /// Damping `γ` [Hz], coefficient of `ẋ` in the equation of motion.
    pub gamma_hz: f64,
    /// Mass `m` [kg].
    pub mass_kg: f64,
    /// Bath temperature `T` [K]; zero gives a noiseless run.
    pub temperature_k: f64,
}

impl OscillatorParams {
    /// Builds parameters from the dimensionless damping `γ̃ = γ/f₀`.
    pub fn from_tilde(gamma_tilde: f64, f0_hz: f64, mass_kg: f64, temperature_k: f64) -> Self {
        Self {
            f0_hz,
            gamma_hz: gamma_tilde * f0_hz,
            mass_kg,
            temperature_k,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.f0_hz > 0.0 && self.mass_kg > 0.0) {
            return Err(DynamicsError::InvalidParams("f0 and mass must be positive".into()));
        }
        if !(self.gamma_hz >= 0.0 && self.temperature_k >= 0.0) {
            return Err(DynamicsError::InvalidParams(
                "damping and temperature must be non-negative".into(),
            ));
        }
        if !(self.f0_hz.is_finite() && self.gamma_hz.is_finite() && self.mass_kg.is_finite() && self.temperature_k.is_finite()) {
            return Err(DynamicsError::InvalidParams("parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.f0_hz
    }

    pub fn gamma_tilde(&self) -> f64 {
        self.gamma_hz / self.f0_hz
    }

    /// Natural length `ℓ = √(2k_BT/(mf₀²))` [m].
    pub fn length_scale(&self) -> f64 {
        (2.0 * BOLTZMANN * self.temperature_k / (self.mass_kg * self.f0_hz * self.f0_hz)).sqrt()
    }

    /// Stationary position variance `k_BT/(mω₀²)` [m²].
    pub fn thermal_variance(&self) -> f64 {
        BOLTZMANN * self.temperature_k / (self.mass_kg * self.omega0().powi(2))
    }

    /// Fit scale `S = 2k_BT/m`.
    pub fn scale(&self) -> f64 {
        2.0 * BOLTZMANN * self.temperature_k / self.mass_kg
    }

    /// Ringdown amplitude decay constant `κ = γ/2` [Hz].
    pub fn amplitude_decay(&self) -> f64 {
        0.5 * self.gamma_hz
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega0() / self.gamma_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeedbackParams {
    /// Position gain `Γ_x` [Hz].
    pub gamma_x_hz: f64,
    /// Velocity gain `Γ_v` [Hz].
    pub gamma_v_hz: f64,
    /// Delay `τ` [s].
    pub tau_s: f64,
}

impl FeedbackParams {
    pub fn none() -> Self {
        Self::default()
    }

    /// From `Γ̃ = Γ/f₀` and `τ̃ = f₀τ`.
    pub fn from_tilde(gamma_x_tilde: f64, gamma_v_tilde: f64, tau_tilde: f64, f0_hz: f64) -> Self {
        Self {
            gamma_x_hz: gamma_x_tilde * f0_hz,
            gamma_v_hz: gamma_v_tilde * f0_hz,
            tau_s: tau_tilde / f0_hz,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.tau_s >= 0.0 && self.tau_s.is_finite()) {
            return Err(DynamicsError::InvalidParams("delay must be non-negative".into()));
        }
        if !(self.gamma_x_hz.is_finite() && self.gamma_v_hz.is_finite()) {
            return Err(DynamicsError::InvalidParams("feedback gains must be finite".into()));
        }
        Ok(())
    }

    pub fn tau_tilde(&self, f0_hz: f64) -> f64 {
        self.tau_s * f0_hz
    }

    pub fn is_off(&self) -> bool {
        self.gamma_x_hz == 0.0 && self.gamma_v_hz == 0.0
    }
}

/// Default blow-up bound on `|x̃|`.
pub const DEFAULT_BLOW_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integration step [s].
    pub dt_s: f64,
    /// Simulated time [s].
    pub duration_s: f64,
    pub seed: u64,
    /// Initial position [m] and velocity [m/s], also held as pre-history.
    pub x0: f64,
    pub v0: f64,
    /// Record every n-th step.
    pub output_every: usize,
    pub blow_bound: f64,
    pub record_velocity: bool,
    /// Steps between energy-trace samples.
    pub energy_every: usize,
    /// Route integer delays through the interpolating path as well.
    pub force_interpolation: bool,
}

impl SimConfig {
    /// `dt = 1/(100 f₀)`, output every step.
    pub fn new(f0_hz: f64, duration_s: f64, seed: u64) -> Self {
        Self {
            dt_s: 1.0 / (100.0 * f0_hz),
            duration_s,
            seed,
            x0: 0.0,
            v0: 0.0,
            output_every: 1,
            blow_bound: DEFAULT_BLOW_BOUND,
            record_velocity: false,
            energy_every: 1000,
            force_interpolation: false,
        }
    }

    pub fn validate(&self, params: &OscillatorParams, fb: &FeedbackParams) -> Result<(), DynamicsError> {
        if !(self.dt_s > 0.0 && self.dt_s <= 1.0 / (50.0 * params.f0_hz)) {
            return Err(DynamicsError::InvalidParams(format!(
                "dt = {} s must be positive and at most 1/(50 f0)",
                self.dt_s
            )));
        }
        if !(self.duration_s >= fb.tau_s && self.duration_s > 0.0) {
            return Err(DynamicsError::InvalidParams("duration must cover the delay".into()));
        }
        if self.output_every == 0 || self.energy_every == 0 {
            return Err(DynamicsError::InvalidParams("decimation factors must be ≥ 1".into()));
        }
        if !(self.blow_bound > 0.0) {
            return Err(DynamicsError::InvalidParams("blow-up bound must be positive".into()));
        }
        if !(self.x0.is_finite() && self.v0.is_finite()) {
            return Err(DynamicsError::InvalidParams("initial state must be finite".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration_s / self.dt_s).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SimStatus {
    Completed,
    BlewUp { time_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDiagnostics {
    pub max_abs_x_tilde: f64,
    /// `½(x̃′² + (2π)²x̃²)` every `energy_every` steps.
    pub energy_trace: Vec<f64>,
    pub energy_every: usize,
    pub steps: usize,
    /// Length unit used for `x̃` [m].
    pub length_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub trajectory: Trajectory,
    pub status: SimStatus,
    pub diagnostics: SimDiagnostics,
}

impl SimOutcome {
    pub fn blew_up(&self) -> bool {
        matches!(self.status, SimStatus::BlewUp { .. })
    }
}

/// History of `(x̃, x̃′)` per step, long enough for a fixed delay.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: Vec<(f64, f64)>,
    head: usize,
    filled: usize,
    initial: (f64, f64),
}

impl DelayLine {
    /// Holds up to `max_lag + 1` states; reads before the first push return
    /// `initial`.
    pub fn new(max_lag: usize, initial: (f64, f64)) -> Self {
        Self {
            buf: vec![initial; max_lag + 1],
            head: 0,
            filled: 0,
            initial,
        }
    }

    pub fn push(&mut self, state: (f64, f64)) {
        self.head = (self.head + 1) % self.buf.len();
        self.buf[self.head] = state;
        self.filled = (self.filled + 1).min(self.buf.len());
    }

    /// State `lag` pushes before the newest one.
    pub fn direct(&self, lag: usize) -> (f64, f64) {
        assert!(lag < self.buf.len(), "lag exceeds delay line capacity");
        if lag >= self.filled {
            return self.initial;
        }
        let n = self.buf.len();
        self.buf[(self.head + n - lag) % n]
    }

    /// State at a fractional lag, linearly interpolated.
    pub fn interpolated(&self, lag: f64) -> (f64, f64) {
        let k = lag.floor();
        let frac = lag - k;
        let a = self.direct(k as usize);
        if frac == 0.0 {
            return a;
        }
        let b = self.direct(k as usize + 1);
        (a.0 + frac * (b.0 - a.0), a.1 + frac * (b.1 - a.1))
    }
}

/// Integrates the feedback EOM with semi-implicit Euler–Maruyama: the
/// velocity is advanced with a noise increment `√γ̃·√dt̃·N(0,1)`, then the
/// position with the new velocity. Velocities therefore live at half steps;
/// the delayed velocity is read half a step later to stay time-centred.
pub fn simulate(
    params: &OscillatorParams,
    fb: &FeedbackParams,
    cfg: &SimConfig,
) -> Result<SimOutcome, DynamicsError> {
    params.validate()?;
    fb.validate()?;
    cfg.validate(params, fb)?;

    let nu = params.f0_hz;
    let thermal = params.length_scale();
    let ell = if params.temperature_k > 0.0 { thermal } else { 1.0 };
    let gt = params.gamma_tilde();
    let gx = fb.gamma_x_hz / nu;
    let gv = fb.gamma_v_hz / nu;
    let dt = cfg.dt_s * nu;
    let w2 = (2.0 * PI).powi(2);
    let noise = gt.sqrt() * (thermal / ell) * dt.sqrt();

    let lag = fb.tau_tilde(nu) / dt;
    let lag_int = lag.round();
    let integer_lag = (lag - lag_int).abs() < 1e-9 * lag.max(1.0);
    let use_direct = integer_lag && !cfg.force_interpolation;
    let lag = if integer_lag { lag_int } else { lag };
    let has_feedback = !fb.is_off();
    // Stored velocities sit half a step behind the positions.
    let vlag = (lag - 0.5).max(0.0);

    let mut x = cfg.x0 / ell;
    let mut v = cfg.v0 / (ell * nu);
    let mut line = DelayLine::new(lag.ceil() as usize + 1, (x, v));
    line.push((x, v));

    let steps = cfg.steps();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cap = steps / cfg.output_every + 1;
    let mut xs = Vec::with_capacity(cap);
    let mut vs = Vec::with_capacity(if cfg.record_velocity { cap } else { 0 });
    xs.push(x * ell);
    if cfg.record_velocity {
        vs.push(v * ell * nu);
    }
    let mut energy = vec![0.5 * (v * v + w2 * x * x)];
    let mut max_abs = x.abs();
    let mut status = SimStatus::Completed;

    for n in 1..=steps {
        let (xd, vd) = if !has_feedback {
            (0.0, 0.0)
        } else {
            let xd = if use_direct {
                line.direct(lag as usize).0
            } else {
                line.interpolated(lag).0
            };
            (xd, line.interpolated(vlag).1)
        };
        let xi: f64 = if noise != 0.0 {
            StandardNormal.sample(&mut rng)
        } else {
            0.0
        };
        v += dt * (-gt * v - w2 * x - gx * xd - gv * vd) + noise * xi;
        x += dt * v;
        line.push((x, v));
        max_abs = max_abs.max(x.abs());
        if n % cfg.energy_every == 0 {
            energy.push(0.5 * (v * v + w2 * x * x));
        }
        if n % cfg.output_every == 0 {
            xs.push(x * ell);
            if cfg.record_velocity {
                vs.push(v * ell * nu);
            }
        }
        if !(x.abs() <= cfg.blow_bound) {
            status = SimStatus::BlewUp {
                time_s: n as f64 * cfg.dt_s,
            };
            break;
        }
    }

    let fs = 1.0 / (cfg.dt_s * cfg.output_every as f64);
    let truncated_at = match status {
        SimStatus::BlewUp { .. } => Some(xs.len()),
        SimStatus::Completed => None,
    };
    let trajectory = Trajectory {
        fs,
        t0: 0.0,
        x: xs,
        v: cfg.record_velocity.then_some(vs),
        seed: Some(cfg.seed),
        truncated_at,
        valid_from: 0,
    };
    Ok(SimOutcome {
        trajectory,
        status,
        diagnostics: SimDiagnostics {
            max_abs_x_tilde: max_abs,
            energy_trace: energy,
            energy_every: cfg.energy_every,
            steps,
            length_scale: ell,
        },
    })
}

/// Noiseless, feedback-free decay from `x0` [m] at rest.
pub fn ringdown(params: &OscillatorParams, x0: f64, duration_s: f64, dt_s: f64) -> Result<Trajectory, DynamicsError> {
    let quiet = OscillatorParams {
        temperature_k: 0.0,
        ..*params
    };
    let cfg = SimConfig {
        dt_s,
        x0,
        ..SimConfig::new(params.f0_hz, duration_s, 0)
    };
    Ok(simulate(&quiet, &FeedbackParams::none(), &cfg)?.trajectory)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingdownFit {
    pub amplitude: f64,
    /// Amplitude decay constant `κ` [Hz].
    pub kappa_hz: f64,
    pub f0_hz: f64,
    /// `πf₀/κ`; `+∞` when undamped.
    pub q: f64,
    pub undamped: bool,
    pub peaks_used: usize,
}

/// Locates positive maxima with parabolic refinement; returns `(t, height)`.
pub fn find_peaks(traj: &Trajectory) -> Vec<(f64, f64)> {
    let x = traj.valid_x();
    let offset = traj.valid_from.min(traj.x.len());
    let mut peaks = Vec::new();
    for i in 1..x.len().saturating_sub(1) {
        let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
        if b > 0.0 && b > a && b >= c {
            let denom = a - 2.0 * b + c;
            let (shift, height) = if denom < 0.0 {
                let s = 0.5 * (a - c) / denom;
                (s, b - 0.25 * (a - c) * s)
            } else {
                (0.0, b)
            };
            peaks.push((traj.time(offset + i) + shift / traj.fs, height));
        }
    }
    peaks
}

/// Fits `A e^{−κt}` to the peak envelope by log-linear least squares and
/// returns `Q = πf₀/κ`, with `f₀` from the mean peak spacing.
pub fn fit_ringdown(traj: &Trajectory) -> Result<RingdownFit, DynamicsError> {
    let peaks = find_peaks(traj);
    if peaks.len() < 10 {
        return Err(DynamicsError::InsufficientPeaks { found: peaks.len() });
    }
    let n = peaks.len() as f64;
    let t_mean = peaks.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = peaks.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, h) in &peaks {
        sxy += (t - t_mean) * (h.ln() - y_mean);
        sxx += (t - t_mean) * (t - t_mean);
    }
    let slope = sxy / sxx;
    let kappa = -slope;
    let amplitude = (y_mean - slope * t_mean).exp();
    let span = peaks[peaks.len() - 1].0 - peaks[0].0;
    let f0 = (peaks.len() - 1) as f64 / span;
    // Less than 1 ppm of envelope change over the record counts as undamped.
    let undamped = kappa * span < 1e-6;
    Ok(RingdownFit {
        amplitude,
        kappa_hz: kappa,
        f0_hz: f0,
        q: if undamped { f64::INFINITY } else { PI * f0 / kappa },
        undamped,
        peaks_used: peaks.len(),
    })
}

/// Burn-in in periods: `20/γ̃`, at most a quarter of the run.
pub fn default_burn_in(gamma_tilde: f64, duration_periods: f64) -> f64 {
    let b = if gamma_tilde > 0.0 { 20.0 / gamma_tilde } else { f64::INFINITY };
    b.min(0.25 * duration_periods)
}
