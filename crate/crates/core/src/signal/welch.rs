use std::io::{BufRead, BufReader, Write};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{SignalError, Window};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchOptions {
    pub nperseg: usize,
    /// Fraction of a segment shared with the next one, in `[0, 1)`.
    pub overlap: f64,
    pub window: Window,
    /// Subtract each segment's mean before windowing.
    pub detrend: bool,
}

impl WelchOptions {
    pub fn new(nperseg: usize) -> Self {
        Self {
            nperseg,
            overlap: 0.5,
            window: Window::Hann,
            detrend: true,
        }
    }
}

/// One-sided PSD on a uniform grid from 0 to `fs/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    pub fs: f64,
    pub nperseg: usize,
    pub overlap: f64,
    pub window: Window,
    pub segments: usize,
    pub units: String,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bin_width(&self) -> f64 {
        self.fs / self.nperseg as f64
    }

    /// `Σ P_k Δf` over bins with `f_lo ≤ f_k ≤ f_hi`.
    pub fn band_power(&self, f_lo: f64, f_hi: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.values)
            .filter(|(f, _)| **f >= f_lo && **f <= f_hi)
            .map(|(_, p)| p)
            .sum::<f64>()
            * self.bin_width()
    }

    pub fn total_power(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.bin_width()
    }

    /// Frequency of the largest non-DC bin inside the band.
    pub fn peak_frequency(&self, f_lo: f64, f_hi: f64) -> Option<f64> {
        self.frequencies
            .iter()
            .zip(&self.values)
            .filter(|(f, _)| **f > 0.0 && **f >= f_lo && **f <= f_hi)
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(f, _)| *f)
    }

    /// `(f, P)` pairs inside the band.
    pub fn band(&self, f_lo: f64, f_hi: f64) -> (Vec<f64>, Vec<f64>) {
        self.frequencies
            .iter()
            .zip(&self.values)
            .filter(|(f, _)| **f >= f_lo && **f <= f_hi)
            .map(|(f, p)| (*f, *p))
            .unzip()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "f_hz,psd")?;
        for (f, p) in self.frequencies.iter().zip(&self.values) {
            writeln!(w, "{f:?},{p:?}")?;
        }
        Ok(())
    }

    /// Reads `f_hz,psd` rows on a uniform grid starting at 0 Hz. Lines
    /// starting with `#` are skipped.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self, SignalError> {
        let mut rows = BufReader::new(r)
            .lines()
            .map(|l| l.map_err(|e| SignalError::Parse(e.to_string())))
            .filter(|l| !matches!(l, Ok(s) if s.starts_with('#') || s.trim().is_empty()));
        let header = rows.next().ok_or_else(|| SignalError::Parse("empty file".into()))??;
        if header.trim() != "f_hz,psd" {
            return Err(SignalError::Parse(format!("unexpected header `{}`", header.trim())));
        }
        let (mut fs_, mut ps) = (Vec::new(), Vec::new());
        for row in rows {
            let row = row?;
            let mut it = row.split(',');
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(SignalError::Parse(format!("bad row `{row}`")));
            };
            let f: f64 = a.trim().parse().map_err(|_| SignalError::Parse(format!("bad row `{row}`")))?;
            let p: f64 = b.trim().parse().map_err(|_| SignalError::Parse(format!("bad row `{row}`")))?;
            fs_.push(f);
            ps.push(p);
        }
        if fs_.len() < 2 {
            return Err(SignalError::Parse("need at least two bins".into()));
        }
        let df = fs_[1] - fs_[0];
        if !(df > 0.0) || fs_.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SignalError::Parse("frequencies must be strictly increasing".into()));
        }
        let nperseg = 2 * (fs_.len() - 1);
        Ok(Self {
            fs: df * nperseg as f64,
            frequencies: fs_,
            values: ps,
            nperseg,
            overlap: 0.0,
            window: Window::Rectangular,
            segments: 0,
            units: "m^2/Hz".into(),
        })
    }
}

/// Welch average of windowed periodograms with one-sided density scaling
/// `2|X_k|²/(fs·Σw²)` (no doubling at DC and Nyquist), so that
/// `Σ P_k Δf` equals the variance. Uses the samples from `valid_from` up to
/// any truncation point.
pub fn welch_psd(traj: &Trajectory, opts: &WelchOptions) -> Result<Spectrum, SignalError> {
    let end = traj.truncated_at.unwrap_or(traj.x.len()).min(traj.x.len());
    let start = traj.valid_from.min(end);
    let x = &traj.x[start..end];
    let n = opts.nperseg;
    if n < 2 || n > x.len() {
        return Err(SignalError::TooShort { len: x.len(), nperseg: n });
    }
    if !(0.0..1.0).contains(&opts.overlap) {
        return Err(SignalError::InvalidArgument("overlap must lie in [0, 1)".into()));
    }
    let step = (n - (opts.overlap * n as f64).floor() as usize).max(1);
    let segments = (x.len() - n) / step + 1;
    let w = opts.window.periodic(n);
    let wss: f64 = w.iter().map(|v| v * v).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let nbins = n / 2 + 1;

    let periodograms: Vec<Vec<f64>> = (0..segments)
        .into_par_iter()
        .map(|s| {
            let seg = &x[s * step..s * step + n];
            let mean = if opts.detrend { seg.iter().sum::<f64>() / n as f64 } else { 0.0 };
            let mut buf: Vec<Complex64> = seg
                .iter()
                .zip(&w)
                .map(|(v, wk)| Complex64::new((v - mean) * wk, 0.0))
                .collect();
            fft.process(&mut buf);
            buf[..nbins].iter().map(|c| c.norm_sqr()).collect()
        })
        .collect();

    let mut values = vec![0.0; nbins];
    for p in &periodograms {
        for (acc, v) in values.iter_mut().zip(p) {
            *acc += v;
        }
    }
    let scale = 1.0 / (traj.fs * wss * segments as f64);
    for (k, v) in values.iter_mut().enumerate() {
        let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
        *v *= scale * one_sided;
    }
    let frequencies = (0..nbins).map(|k| k as f64 * traj.fs / n as f64).collect();
    Ok(Spectrum {
        frequencies,
        values,
        fs: traj.fs,
        nperseg: n,
        overlap: opts.overlap,
        window: opts.window,
        segments,
        units: "m^2/Hz".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn white(n: usize, fs: f64, seed: u64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Trajectory::new(fs, (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
    }

    #[test]
    fn white_noise_level() {
        let fs = 1000.0;
        let s = welch_psd(&white(400_000, fs, 1), &WelchOptions::new(1024)).unwrap();
        let inner = &s.values[1..s.len() - 1];
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        assert!((mean * fs / 2.0 - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn parseval_for_noise_and_tone() {
        let t = white(200_000, 500.0, 2);
        let var = t.x.iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        let s = welch_psd(&t, &WelchOptions::new(512)).unwrap();
        assert!(s.segments >= 100);
        assert!((s.total_power() / var - 1.0).abs() < 0.02);

        let fs = 1250.0;
        let a = 3.0;
        let x = (0..125_000).map(|i| a * (2.0 * PI * 18.9 * i as f64 / fs).sin()).collect();
        let s = welch_psd(&Trajectory::new(fs, x), &WelchOptions::new(4096)).unwrap();
        assert!((s.total_power() / (a * a / 2.0) - 1.0).abs() < 0.02);
        assert!((s.peak_frequency(1.0, 600.0).unwrap() - 18.9).abs() <= s.bin_width());
    }

    #[test]
    fn rejects_short_input_and_bad_overlap() {
        let t = white(100, 10.0, 0);
        assert!(matches!(welch_psd(&t, &WelchOptions::new(256)), Err(SignalError::TooShort { .. })));
        let opts = WelchOptions { overlap: 1.0, ..WelchOptions::new(16) };
        assert!(welch_psd(&t, &opts).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = welch_psd(&white(4096, 100.0, 3), &WelchOptions::new(256)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = Spectrum::read_csv(&buf[..]).unwrap();
        assert_eq!(back.frequencies, s.frequencies);
        assert_eq!(back.values, s.values);
        assert!((back.fs - 100.0).abs() < 1e-9);
    }

    #[test]
    fn frequency_grid_spans_to_nyquist() {
        let s = welch_psd(&white(2048, 64.0, 4), &WelchOptions::new(128)).unwrap();
        assert_eq!(s.frequencies[0], 0.0);
        assert_eq!(*s.frequencies.last().unwrap(), 32.0);
        assert!(s.values.iter().all(|&v| v >= 0.0));
    }
}
