//! Physical constants (SI).

/// Vacuum permeability, CODATA 2018 [T·m/A].
pub const MU0: f64 = 1.256_637_062_12e-6;

/// Boltzmann constant, exact [J/K].
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Standard gravity, exact [m/s²].
pub const STANDARD_GRAVITY: f64 = 9.806_65;
