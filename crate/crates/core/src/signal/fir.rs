use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{SignalError, Window};
use crate::trajectory::Trajectory;

/// Linear-phase FIR filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    pub coefficients: Vec<f64>,
    pub fs: f64,
    /// Pass band `(f_lo, f_hi)` [Hz]; `(0, f_c)` for low-pass designs.
    pub band: (f64, f64),
    pub window: Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterMetadata {
    pub length: usize,
    pub fs_hz: f64,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub window: Window,
    pub group_delay_samples: f64,
    pub group_delay_s: f64,
    pub dc_gain: f64,
    pub center_gain_db: f64,
}

impl FirFilter {
    /// Single unit tap: passes the input through unchanged.
    pub fn identity(fs: f64) -> Self {
        Self {
            coefficients: vec![1.0],
            fs,
            band: (0.0, fs / 2.0),
            window: Window::Rectangular,
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        let h = &self.coefficients;
        (0..h.len()).all(|k| h[k] == h[h.len() - 1 - k])
    }

    /// Complex response `H(f) = Σ h_k e^{−i2πfk/fs}`.
    pub fn response(&self, f: f64) -> Complex64 {
        let w = -2.0 * PI * f / self.fs;
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, &h)| Complex64::from_polar(h, w * k as f64))
            .sum()
    }

    pub fn gain(&self, f: f64) -> f64 {
        self.response(f).norm()
    }

    pub fn gain_db(&self, f: f64) -> f64 {
        20.0 * self.gain(f).log10()
    }

    pub fn dc_gain(&self) -> f64 {
        self.coefficients.iter().sum()
    }

    /// `(N−1)/2` samples.
    pub fn group_delay_samples(&self) -> f64 {
        (self.len() as f64 - 1.0) / 2.0
    }

    pub fn metadata(&self) -> FilterMetadata {
        let center = 0.5 * (self.band.0 + self.band.1);
        FilterMetadata {
            length: self.len(),
            fs_hz: self.fs,
            f_lo_hz: self.band.0,
            f_hi_hz: self.band.1,
            window: self.window,
            group_delay_samples: self.group_delay_samples(),
            group_delay_s: self.group_delay_samples() / self.fs,
            dc_gain: self.dc_gain(),
            center_gain_db: self.gain_db(center),
        }
    }

    /// One coefficient per line under a `coefficient` header.
    pub fn write_coefficients_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "coefficient")?;
        for h in &self.coefficients {
            writeln!(w, "{h:?}")?;
        }
        Ok(())
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Windowed-sinc band-pass with a Hamming window. The design is shifted by a
/// multiple of the window to null the DC gain, then scaled to unit gain at
/// the band centre.
pub fn design_bandpass(n: usize, fs: f64, f_lo: f64, f_hi: f64) -> Result<FirFilter, SignalError> {
    if n % 2 == 0 || n < 3 {
        return Err(SignalError::InvalidBand(format!("filter length {n} must be odd and ≥ 3")));
    }
    if !(fs > 0.0 && 0.0 < f_lo && f_lo < f_hi && f_hi < fs / 2.0) {
        return Err(SignalError::InvalidBand(format!(
            "need 0 < f_lo < f_hi < fs/2, got {f_lo}..{f_hi} at fs = {fs}"
        )));
    }
    let w = Window::Hamming.symmetric(n);
    let half = (n - 1) / 2;
    let (a, b) = (2.0 * f_lo / fs, 2.0 * f_hi / fs);
    let mut h = vec![0.0; n];
    for k in 0..=half {
        let m = k as f64 - half as f64;
        let v = (b * sinc(b * m) - a * sinc(a * m)) * w[k];
        h[k] = v;
        h[n - 1 - k] = v;
    }
    let leak = h.iter().sum::<f64>() / w.iter().sum::<f64>();
    for k in 0..=half {
        let v = h[k] - leak * w[k];
        h[k] = v;
        h[n - 1 - k] = v;
    }
    let mut filter = FirFilter {
        coefficients: h,
        fs,
        band: (f_lo, f_hi),
        window: Window::Hamming,
    };
    let g = filter.gain(0.5 * (f_lo + f_hi));
    for c in &mut filter.coefficients {
        *c /= g;
    }
    Ok(filter)
}

/// Windowed-sinc low-pass with unit DC gain.
pub fn design_lowpass(n: usize, fs: f64, cutoff: f64, window: Window) -> Result<FirFilter, SignalError> {
    if n % 2 == 0 {
        return Err(SignalError::InvalidBand(format!("filter length {n} must be odd")));
    }
    if !(cutoff > 0.0 && cutoff < fs / 2.0) {
        return Err(SignalError::InvalidBand(format!("cutoff {cutoff} outside (0, fs/2)")));
    }
    let w = window.symmetric(n);
    let half = (n - 1) / 2;
    let b = 2.0 * cutoff / fs;
    let mut h = vec![0.0; n];
    for k in 0..=half {
        let m = k as f64 - half as f64;
        let v = b * sinc(b * m) * w[k];
        h[k] = v;
        h[n - 1 - k] = v;
    }
    let s: f64 = h.iter().sum();
    for c in &mut h {
        *c /= s;
    }
    Ok(FirFilter {
        coefficients: h,
        fs,
        band: (0.0, cutoff),
        window,
    })
}

/// Group delay in oscillation periods at `f0`: `((N−1)/2)·f₀/fs`.
pub fn group_delay_periods(filter: &FirFilter, f0: f64) -> f64 {
    // Integer numerator first so that e.g. 500·19/1250 is exact.
    let half = (filter.len() - 1) / 2;
    (half as f64 * f0) / filter.fs
}

/// Causal direct-form convolution, then an extra delay of `extra_delay`
/// samples (linear interpolation for the fractional part), then
/// `gain·y + dc_shift`. The first `N − 1 + ⌈extra_delay⌉` output samples are
/// warm-up and are marked via `valid_from`. Velocity samples are dropped.
pub fn apply_filter(
    filter: &FirFilter,
    traj: &Trajectory,
    extra_delay: f64,
    gain: f64,
    dc_shift: f64,
) -> Result<Trajectory, SignalError> {
    if (filter.fs - traj.fs).abs() > 1e-9 * filter.fs {
        return Err(SignalError::RateMismatch {
            filter: filter.fs,
            trajectory: traj.fs,
        });
    }
    if !(extra_delay >= 0.0 && extra_delay.is_finite()) {
        return Err(SignalError::InvalidArgument("extra delay must be non-negative".into()));
    }
    let h = &filter.coefficients;
    let x = &traj.x;
    let y: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|n| {
            let kmax = n.min(h.len() - 1);
            (0..=kmax).map(|k| h[k] * x[n - k]).sum()
        })
        .collect();

    let k = extra_delay.floor() as usize;
    let frac = extra_delay - k as f64;
    let at = |i: isize| if i < 0 { 0.0 } else { y[i as usize] };
    let out: Vec<f64> = (0..y.len() as isize)
        .map(|n| {
            let a = at(n - k as isize);
            let delayed = if frac == 0.0 { a } else { a + frac * (at(n - k as isize - 1) - a) };
            gain * delayed + dc_shift
        })
        .collect();

    let warmup = h.len() - 1 + extra_delay.ceil() as usize;
    Ok(Trajectory {
        fs: traj.fs,
        t0: traj.t0,
        x: out,
        v: None,
        seed: traj.seed,
        truncated_at: traj.truncated_at,
        valid_from: (traj.valid_from + warmup).min(traj.x.len()),
    })
}

/// Complex demodulation of `x` at `f`, averaged over one period centred on
/// each sample.
fn demodulate(x: &[f64], fs: f64, f: f64) -> Vec<Complex64> {
    let w = 2.0 * PI * f / fs;
    let z: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(n, &v)| Complex64::from_polar(v, -w * n as f64))
        .collect();
    let p = (fs / f).round().max(1.0) as usize;
    let mut prefix = vec![Complex64::new(0.0, 0.0); z.len() + 1];
    for (i, v) in z.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..z.len())
        .map(|n| {
            let lo = n.saturating_sub(p / 2);
            let hi = (lo + p).min(z.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Delay in periods of the tone at `f` between `input` and `output`
/// (same rate, tone switched on inside the record). The fractional part
/// comes from the steady-state lock-in phase, the whole number of cycles
/// from the half-rise times of the demodulated envelopes.
pub fn measure_tone_delay(input: &Trajectory, output: &Trajectory, f: f64) -> Result<f64, SignalError> {
    if (input.fs - output.fs).abs() > 1e-9 * input.fs || input.len() != output.len() {
        return Err(SignalError::InvalidArgument("input and output must share rate and length".into()));
    }
    let fs = input.fs;
    let di = demodulate(&input.x, fs, f);
    let dout = demodulate(&output.x, fs, f);
    let n = input.len();
    // Steady-state phase from the final quarter of the record.
    let tail = 3 * n / 4..n - (fs / f) as usize;
    let mean = |d: &[Complex64]| d[tail.clone()].iter().sum::<Complex64>();
    let (pi_, po) = (mean(&di), mean(&dout));
    let frac = ((pi_.arg() - po.arg()) / (2.0 * PI)).rem_euclid(1.0);
    let half_rise = |d: &[Complex64], steady: f64| d.iter().position(|z| z.norm() >= 0.5 * steady);
    let si = pi_.norm() / tail.len() as f64;
    let so = po.norm() / tail.len() as f64;
    let (Some(ti), Some(to)) = (half_rise(&di, si), half_rise(&dout, so)) else {
        return Err(SignalError::InvalidArgument("tone envelope never reaches half amplitude".into()));
    };
    let coarse = (to as f64 - ti as f64) / fs * f;
    Ok(frac + (coarse - frac).round())
}
