//! Toolkit for diamagnetically levitated plate resonators.
//!
//! The crate is organised bottom-up:
//!
//! * [`magnetostatics`] – closed-form field of cuboid magnets and the 2×2
//!   alternating-polarity array.
//! * [`levitation`] – plate potential energy over the array, its
//!   nondimensional form, equilibrium search and energy landscapes.
//! * [`dynamics`] – stochastic simulation of the thermally driven oscillator
//!   with delayed position/velocity feedback, ringdowns and Q extraction.
//! * [`signal`] – FIR band-pass design, filtering, resampling and Welch PSDs.
//! * [`spectra`] – closed-form PSDs, peak frequency, normalised PSD,
//!   `T_ratio` and effective temperature.
//! * [`fitting`] – Levenberg–Marquardt fits of measured spectra and fit tables.
//! * [`orchestration`] – end-to-end studies writing CSV/JSON outputs.

pub mod constants;
pub mod dynamics;
pub mod fitting;
pub mod levitation;
pub mod magnetostatics;
pub mod optimize;
pub mod orchestration;
pub mod quadrature;
pub mod signal;
pub mod spectra;
pub mod trajectory;

pub use dynamics::{FeedbackParams, OscillatorParams, SimConfig, SimOutcome, SimStatus};
pub use magnetostatics::{MagnetArraySpec, Vec3};
pub use signal::Spectrum;
pub use trajectory::Trajectory;
