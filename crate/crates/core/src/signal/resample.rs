use rayon::prelude::*;

use super::{design_lowpass, SignalError, Window};
use crate::trajectory::Trajectory;

/// Anti-alias taps per unit of the larger rate factor.
const TAPS_PER_FACTOR: usize = 64;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rational resampling by `up/down` with a zero-phase (centred) Hamming
/// low-pass at 45% of the lower Nyquist rate. The output has
/// `⌈len·up/down⌉` samples and no added delay.
pub fn resample(traj: &Trajectory, up: usize, down: usize) -> Result<Trajectory, SignalError> {
    if up == 0 || down == 0 {
        return Err(SignalError::InvalidArgument("resampling factors must be ≥ 1".into()));
    }
    let g = gcd(up, down);
    let (up, down) = (up / g, down / g);
    if up == 1 && down == 1 {
        return Ok(traj.clone());
    }
    let fs_up = traj.fs * up as f64;
    let fs_out = fs_up / down as f64;
    let n_taps = 2 * TAPS_PER_FACTOR * up.max(down) + 1;
    let lp = design_lowpass(n_taps, fs_up, 0.45 * traj.fs.min(fs_out), Window::Hamming)?;
    let h = &lp.coefficients;
    let half = (n_taps - 1) / 2;
    let len_out = (traj.len() * up).div_ceil(down);

    let run = |x: &[f64]| -> Vec<f64> {
        (0..len_out)
            .into_par_iter()
            .map(|j| {
                let s = j * down + half;
                let mut acc = 0.0;
                let mut k = s % up;
                while k < h.len() && k <= s {
                    let idx = (s - k) / up;
                    if idx < x.len() {
                        acc += h[k] * x[idx];
                    }
                    k += up;
                }
                acc * up as f64
            })
            .collect()
    };
    let rescale = |i: usize| (i * up).div_ceil(down);
    Ok(Trajectory {
        fs: fs_out,
        t0: traj.t0,
        x: run(&traj.x),
        v: traj.v.as_deref().map(run),
        seed: traj.seed,
        truncated_at: traj.truncated_at.map(rescale),
        valid_from: rescale(traj.valid_from),
    })
}

/// Integer decimation with anti-alias filtering; `fs` is divided by
/// `factor`.
pub fn decimate(traj: &Trajectory, factor: usize) -> Result<Trajectory, SignalError> {
    resample(traj, 1, factor)
}
