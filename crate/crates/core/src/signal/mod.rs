//! FIR band-pass design and filtering, resampling, delay measurement and
//! Welch PSD estimation.

mod fir;
mod resample;
mod welch;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fir::{apply_filter, design_bandpass, design_lowpass, group_delay_periods, measure_tone_delay, FilterMetadata, FirFilter};
pub use resample::{decimate, resample};
pub use welch::{welch_psd, Spectrum, WelchOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("invalid band: {0}")]
    InvalidBand(String),
    #[error("filter rate {filter} Hz does not match trajectory rate {trajectory} Hz")]
    RateMismatch { filter: f64, trajectory: f64 },
    #[error("series of {len} samples is too short for segments of {nperseg}")]
    TooShort { len: usize, nperseg: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed spectrum file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    Hann,
    Hamming,
    Blackman,
}

impl Window {
    /// Window value at offset `m ∈ [−half, half]` from the centre.
    fn at(self, m: f64, half: f64) -> f64 {
        let c = (PI * m / half).cos();
        match self {
            Window::Rectangular => 1.0,
            Window::Hann => 0.5 + 0.5 * c,
            Window::Hamming => 0.54 + 0.46 * c,
            Window::Blackman => 0.42 + 0.5 * c + 0.08 * (2.0 * PI * m / half).cos(),
        }
    }

    /// Symmetric window of length `n`, exactly mirror-symmetric.
    pub fn symmetric(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let half = (n - 1) as f64 / 2.0;
        let mut w = vec![0.0; n];
        for k in 0..n.div_ceil(2) {
            let v = self.at(k as f64 - half, half);
            w[k] = v;
            w[n - 1 - k] = v;
        }
        w
    }

    /// Periodic window of length `n` (the first `n` points of a symmetric
    /// window of length `n + 1`), as used for spectral analysis.
    pub fn periodic(self, n: usize) -> Vec<f64> {
        let mut w = self.symmetric(n + 1);
        w.pop();
        w
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Rectangular => "rectangular",
            Window::Hann => "hann",
            Window::Hamming => "hamming",
            Window::Blackman => "blackman",
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Window {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "boxcar" => Ok(Window::Rectangular),
            "hann" | "hanning" => Ok(Window::Hann),
            "hamming" => Ok(Window::Hamming),
            "blackman" => Ok(Window::Blackman),
            other => Err(SignalError::InvalidArgument(format!("unknown window `{other}`"))),
        }
    }
}
