//! Potential energy of a thin square diamagnetic plate levitated above the
//! checkerboard array, its nondimensional form, and equilibrium search.
//!
//! The plate lies in a horizontal plane with its centre on the array axis at
//! height `z` above the magnets' top faces and is rotated by `φ` about the
//! vertical. In the thin-plate model the field is sampled on the mid-plane,
//! so the magnetic energy is a double integral over the rotated square
//! footprint, evaluated with a tensor-product Gauss–Legendre rule on the
//! reference square mapped through the rotation.
//!
//! Dimensionless quantities use the magnet side `D` for length and
//! `𝓔 = |χ_z0| μ₀ M² δ D²` for energy, where `χ_z0` is the HOPG c-axis
//! susceptibility. Then `Ũ = c̃ Ũ_B + g̃ L̃² z̃` with
//! `Ũ_B = ½ ∬ [χ̃_xy (B̃_x² + B̃_y²) + B̃_z²] dx̃ dỹ`.

pub mod presets;

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{MU0, STANDARD_GRAVITY};
use crate::magnetostatics::{unit_array_field, FieldError, MagnetArraySpec};
use crate::optimize::nelder_mead;
use crate::quadrature::GaussLegendre;

pub use presets::{builtin_presets, find_preset, MaterialPreset, HOPG_CHI_Z};

/// Default tensor-product quadrature order per axis.
pub const DEFAULT_QUAD_ORDER: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LevitationError {
    #[error("invalid plate: {0}")]
    InvalidPlate(String),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("quadrature node hit a field singularity: {0}")]
    QuadratureDivergence(#[from] FieldError),
    #[error("coarse minimum at z̃ = {z_tilde}, φ = {phi} lies on the search box boundary")]
    NoMinimumInBox { z_tilde: f64, phi: f64 },
    #[error("material preset: {0}")]
    Preset(String),
}

/// Square plate with diagonal susceptibility `(χ_x, χ_y, χ_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateSpec {
    /// Side length `L` [m].
    pub side_length: f64,
    /// Thickness `δ` [m].
    pub thickness: f64,
    /// Density `ρ` [kg/m³].
    pub density: f64,
    /// Diagonal of the susceptibility tensor; all entries ≤ 0 and `χ_x = χ_y`.
    pub chi: [f64; 3],
}

impl PlateSpec {
    pub fn validate(&self) -> Result<(), LevitationError> {
        if !(self.side_length > 0.0 && self.thickness > 0.0 && self.density > 0.0) {
            return Err(LevitationError::InvalidPlate(
                "side length, thickness and density must be positive".into(),
            ));
        }
        if self.chi.iter().any(|&c| !(c <= 0.0)) {
            return Err(LevitationError::InvalidPlate(
                "susceptibilities must be non-positive".into(),
            ));
        }
        if self.chi[0] != self.chi[1] {
            return Err(LevitationError::InvalidPlate(
                "in-plane susceptibilities must be equal".into(),
            ));
        }
        Ok(())
    }

    pub fn chi_xy(&self) -> f64 {
        self.chi[0]
    }

    pub fn chi_z(&self) -> f64 {
        self.chi[2]
    }

    pub fn mass(&self) -> f64 {
        self.density * self.side_length * self.side_length * self.thickness
    }
}

/// Height of the plate centre above the magnet top faces and rotation about
/// the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateConfiguration {
    /// `z` [m].
    pub height: f64,
    /// `φ` [rad].
    pub rotation: f64,
}

impl PlateConfiguration {
    pub fn validate(&self, plate: &PlateSpec) -> Result<(), LevitationError> {
        if !(self.height > 0.5 * plate.thickness) {
            return Err(LevitationError::InvalidConfiguration(format!(
                "plate centre at z = {} m does not clear the magnets (δ/2 = {} m)",
                self.height,
                0.5 * plate.thickness
            )));
        }
        Ok(())
    }

    /// Rotation reduced to `[0, π/2)`.
    pub fn canonical_rotation(&self) -> f64 {
        canonical_angle(self.rotation)
    }
}

/// Reduces an angle to the canonical branch `[0, π/2)`.
pub fn canonical_angle(phi: f64) -> f64 {
    let r = phi.rem_euclid(FRAC_PI_2);
    if r >= FRAC_PI_2 {
        0.0
    } else {
        r
    }
}

/// Distance between two angles modulo `π/2`.
pub fn angular_distance_mod_quarter(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(FRAC_PI_2);
    d.min(FRAC_PI_2 - d)
}

/// Natural scales of the plate energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondimensionalScales {
    /// `𝓔` [J]; zero when only the dimensionless material numbers are known.
    pub energy_scale: f64,
    /// Effective gravity `g̃ = ρ g D / (μ₀ M² |χ_z0|)`.
    pub gravity: f64,
    /// Strength `c̃ = χ_z / χ_z0`.
    pub strength: f64,
    /// Anisotropy `χ̃_xy = χ_xy / χ_z`.
    pub anisotropy: f64,
    /// Reference susceptibility `χ_z0`.
    pub chi_z0: f64,
}

impl NondimensionalScales {
    pub fn new(plate: &PlateSpec, array: &MagnetArraySpec, chi_z0: f64) -> Result<Self, LevitationError> {
        plate.validate()?;
        if !(chi_z0 < 0.0) {
            return Err(LevitationError::InvalidPlate(
                "reference susceptibility must be negative".into(),
            ));
        }
        if plate.chi_z() == 0.0 {
            return Err(LevitationError::InvalidPlate(
                "χ_z must be non-zero to define the anisotropy".into(),
            ));
        }
        let m2 = array.magnetization * array.magnetization;
        let d = array.magnet_side;
        Ok(Self {
            energy_scale: chi_z0.abs() * MU0 * m2 * plate.thickness * d * d,
            gravity: plate.density * STANDARD_GRAVITY * d / (MU0 * m2 * chi_z0.abs()),
            strength: plate.chi_z() / chi_z0,
            anisotropy: plate.chi_xy() / plate.chi_z(),
            chi_z0,
        })
    }

    /// Scales relative to the HOPG reference susceptibility.
    pub fn with_hopg_reference(plate: &PlateSpec, array: &MagnetArraySpec) -> Result<Self, LevitationError> {
        Self::new(plate, array, HOPG_CHI_Z)
    }
}

/// How the field is sampled through the plate thickness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThicknessSampling {
    /// Field on the mid-plane only.
    MidPlane,
    /// Simpson average over bottom, middle and top faces; `thickness_tilde`
    /// is `δ / D`.
    ThreePoint { thickness_tilde: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyOptions {
    pub quad_order: usize,
    pub sampling: ThicknessSampling,
    pub edge_eps: f64,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        Self {
            quad_order: DEFAULT_QUAD_ORDER,
            sampling: ThicknessSampling::MidPlane,
            edge_eps: crate::magnetostatics::DEFAULT_EDGE_EPS,
        }
    }
}

impl EnergyOptions {
    pub fn with_order(quad_order: usize) -> Self {
        Self {
            quad_order,
            ..Self::default()
        }
    }
}

/// Integrates `g(x̃, ỹ, z̃_sample)` over the rotated square of side `l` for
/// each sampled height and returns the weighted sum.
fn integrate_footprint<G>(
    l: f64,
    z: f64,
    phi: f64,
    opts: &EnergyOptions,
    g: G,
) -> Result<f64, LevitationError>
where
    G: Fn(f64, f64, f64) -> Result<f64, FieldError>,
{
    if opts.quad_order < 2 {
        return Err(LevitationError::InvalidConfiguration(
            "quadrature order must be at least 2".into(),
        ));
    }
    let gl = GaussLegendre::new(opts.quad_order);
    let (s, c) = phi.sin_cos();
    let half = 0.5 * l;
    let layers: Vec<(f64, f64)> = match opts.sampling {
        ThicknessSampling::MidPlane => vec![(z, 1.0)],
        ThicknessSampling::ThreePoint { thickness_tilde } => {
            let h = 0.5 * thickness_tilde;
            vec![(z - h, 1.0 / 6.0), (z, 4.0 / 6.0), (z + h, 1.0 / 6.0)]
        }
    };
    let mut total = 0.0;
    for (zl, wl) in layers {
        let mut acc = 0.0;
        for (&u, &wu) in gl.nodes.iter().zip(&gl.weights) {
            let mut row = 0.0;
            for (&v, &wv) in gl.nodes.iter().zip(&gl.weights) {
                let (pu, pv) = (half * u, half * v);
                let x = c * pu - s * pv;
                let y = s * pu + c * pv;
                row += wv * g(x, y, zl)?;
            }
            acc += wu * row;
        }
        total += wl * acc;
    }
    Ok(total * half * half)
}

/// Dimensionless magnetic energy `Ũ_B(L̃, z̃, φ)` for anisotropy `χ̃_xy`.
pub fn magnetic_energy_tilde(
    l_tilde: f64,
    z_tilde: f64,
    phi: f64,
    anisotropy: f64,
    opts: &EnergyOptions,
) -> Result<f64, LevitationError> {
    if !(z_tilde > 0.0) {
        return Err(LevitationError::InvalidConfiguration(format!(
            "z̃ = {z_tilde} must be positive"
        )));
    }
    let integral = integrate_footprint(l_tilde, z_tilde, phi, opts, |x, y, z| {
        let b = unit_array_field([x, y, z], opts.edge_eps)?;
        Ok(anisotropy * (b[0] * b[0] + b[1] * b[1]) + b[2] * b[2])
    })?;
    Ok(0.5 * integral)
}

/// Magnetic energy `U_B` [J] of the plate in configuration `config`,
/// integrated in SI units.
pub fn magnetic_energy(
    plate: &PlateSpec,
    config: &PlateConfiguration,
    array: &MagnetArraySpec,
    opts: &EnergyOptions,
) -> Result<f64, LevitationError> {
    plate.validate()?;
    config.validate(plate)?;
    let opts_si = EnergyOptions {
        sampling: match opts.sampling {
            ThicknessSampling::MidPlane => ThicknessSampling::MidPlane,
            ThicknessSampling::ThreePoint { .. } => ThicknessSampling::ThreePoint {
                thickness_tilde: plate.thickness,
            },
        },
        ..*opts
    };
    let (chi_xy, chi_z) = (plate.chi_xy(), plate.chi_z());
    let integral = integrate_footprint(
        plate.side_length,
        config.height,
        config.rotation,
        &opts_si,
        |x, y, z| {
            let b = array.field([x, y, z])?;
            Ok(chi_xy * (b[0] * b[0] + b[1] * b[1]) + chi_z * b[2] * b[2])
        },
    )?;
    Ok(-plate.thickness / (2.0 * MU0) * integral)
}

/// Gravitational energy `U_g = ρ L² δ g z` [J].
pub fn gravitational_energy(plate: &PlateSpec, z: f64) -> f64 {
    plate.mass() * STANDARD_GRAVITY * z
}

/// Total energy `U = U_B + U_g` [J].
pub fn total_energy(
    plate: &PlateSpec,
    config: &PlateConfiguration,
    array: &MagnetArraySpec,
    opts: &EnergyOptions,
) -> Result<f64, LevitationError> {
    Ok(magnetic_energy(plate, config, array, opts)? + gravitational_energy(plate, config.height))
}

/// Dimensionless potential `Ũ = c̃ Ũ_B + g̃ L̃² z̃`.
pub fn dimensionless_energy(
    l_tilde: f64,
    z_tilde: f64,
    phi: f64,
    scales: &NondimensionalScales,
    opts: &EnergyOptions,
) -> Result<f64, LevitationError> {
    let ub = magnetic_energy_tilde(l_tilde, z_tilde, phi, scales.anisotropy, opts)?;
    Ok(scales.strength * ub + scales.gravity * l_tilde * l_tilde * z_tilde)
}

/// `χ_eff = χ_⊥/3 + 2χ_∥/3`, the orientation average of a uniaxial
/// susceptibility.
pub fn effective_susceptibility(chi_parallel: f64, chi_perp: f64) -> f64 {
    chi_perp / 3.0 + 2.0 * chi_parallel / 3.0
}

/// Rectangle in `(z̃, φ)` scanned before local refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub z_range: (f64, f64),
    pub phi_range: (f64, f64),
    pub z_points: usize,
    pub phi_points: usize,
}

impl Default for SearchBox {
    fn default() -> Self {
        Self {
            z_range: (0.02, 0.4),
            phi_range: (0.0, FRAC_PI_2),
            z_points: 20,
            phi_points: 12,
        }
    }
}

impl SearchBox {
    /// A φ range covering a whole quarter turn is treated as periodic.
    pub fn phi_is_periodic(&self) -> bool {
        self.phi_range.1 - self.phi_range.0 >= FRAC_PI_2 - 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub z_tilde: f64,
    /// Orientation in `[0, π/2)`.
    pub phi: f64,
    pub energy: f64,
    pub evaluations: usize,
}

/// Tolerances of the local refinement.
pub const EQUILIBRIUM_Z_TOL: f64 = 1e-5;
pub const EQUILIBRIUM_PHI_TOL: f64 = 1e-4;

/// Locates the potential minimum: coarse grid scan over the box, then
/// Nelder–Mead refinement from the best cell.
pub fn equilibrium(
    scales: &NondimensionalScales,
    l_tilde: f64,
    search: &SearchBox,
    opts: &EnergyOptions,
) -> Result<Equilibrium, LevitationError> {
    if search.z_points < 3 || search.phi_points < 2 || !(search.z_range.0 > 0.0) {
        return Err(LevitationError::InvalidConfiguration(
            "search box needs z̃ > 0 and at least 3×2 scan points".into(),
        ));
    }
    let periodic = search.phi_is_periodic();
    let zs = linspace(search.z_range.0, search.z_range.1, search.z_points);
    let phis: Vec<f64> = if periodic {
        (0..search.phi_points)
            .map(|k| search.phi_range.0 + FRAC_PI_2 * k as f64 / search.phi_points as f64)
            .collect()
    } else {
        linspace(search.phi_range.0, search.phi_range.1, search.phi_points)
    };

    let cells: Vec<(usize, usize)> = (0..zs.len())
        .flat_map(|i| (0..phis.len()).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            dimensionless_energy(l_tilde, zs[i], phis[j], scales, opts).unwrap_or(f64::INFINITY)
        })
        .collect();
    let (best, &best_value) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("non-empty scan");
    if !best_value.is_finite() {
        return Err(LevitationError::InvalidConfiguration(
            "energy is not finite anywhere in the search box".into(),
        ));
    }
    let (bi, bj) = cells[best];
    let on_z_edge = bi == 0 || bi == zs.len() - 1;
    let on_phi_edge = !periodic && (bj == 0 || bj == phis.len() - 1);
    if on_z_edge || on_phi_edge {
        return Err(LevitationError::NoMinimumInBox {
            z_tilde: zs[bi],
            phi: phis[bj],
        });
    }

    let dz = zs[1] - zs[0];
    let dphi = if phis.len() > 1 { phis[1] - phis[0] } else { 0.1 };
    let f = |p: &[f64]| {
        if p[0] <= 0.0 {
            return f64::INFINITY;
        }
        dimensionless_energy(l_tilde, p[0], p[1], scales, opts).unwrap_or(f64::INFINITY)
    };
    let m = nelder_mead(
        f,
        &[zs[bi], phis[bj]],
        &[0.5 * dz, 0.5 * dphi],
        &[EQUILIBRIUM_Z_TOL, EQUILIBRIUM_PHI_TOL],
        2000,
    );
    Ok(Equilibrium {
        z_tilde: m.x[0],
        phi: canonical_angle(m.x[1]),
        energy: m.value,
        evaluations: values.len() + m.evaluations,
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    crate::magnetostatics::Grid::linspace(lo, hi, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub z_index: usize,
    pub phi_index: usize,
    pub message: String,
}

/// Dense grid of `Ũ` over `(z̃, φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLandscape {
    pub z_tilde: Vec<f64>,
    pub phi: Vec<f64>,
    /// Row-major values, `z̃` outer, `φ` inner. Failed cells hold `NaN`.
    pub values: Vec<f64>,
    pub failures: Vec<CellFailure>,
    pub l_tilde: f64,
    pub quad_order: usize,
    pub material: String,
}

impl EnergyLandscape {
    pub fn value(&self, iz: usize, iphi: usize) -> f64 {
        self.values[iz * self.phi.len() + iphi]
    }

    /// `(iz, iphi, Ũ)` of the smallest finite cell.
    pub fn argmin(&self) -> Option<(usize, usize, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(k, &v)| (k / self.phi.len(), k % self.phi.len(), v))
    }

    /// Writes `z_tilde,phi,U_tilde` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "z_tilde,phi,U_tilde")?;
        for (iz, z) in self.z_tilde.iter().enumerate() {
            for (ip, p) in self.phi.iter().enumerate() {
                writeln!(w, "{:?},{:?},{:?}", z, p, self.value(iz, ip))?;
            }
        }
        Ok(())
    }
}

/// Evaluates `Ũ` on an inclusive `nz × nphi` grid. Cells are independent and
/// evaluated in parallel; output order is fixed.
pub fn landscape(
    scales: &NondimensionalScales,
    material: &str,
    l_tilde: f64,
    z_range: (f64, f64),
    phi_range: (f64, f64),
    resolution: (usize, usize),
    opts: &EnergyOptions,
) -> Result<EnergyLandscape, LevitationError> {
    let (nz, nphi) = resolution;
    if nz < 2 || nphi < 2 || !(z_range.1 > z_range.0) || !(phi_range.1 > phi_range.0) {
        return Err(LevitationError::InvalidConfiguration(
            "landscape ranges must be increasing with at least 2 points per axis".into(),
        ));
    }
    let zs = linspace(z_range.0, z_range.1, nz);
    let phis = linspace(phi_range.0, phi_range.1, nphi);
    let results: Vec<Result<f64, LevitationError>> = (0..nz * nphi)
        .into_par_iter()
        .map(|k| dimensionless_energy(l_tilde, zs[k / nphi], phis[k % nphi], scales, opts))
        .collect();
    let mut values = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(e) => {
                values.push(f64::NAN);
                failures.push(CellFailure {
                    z_index: k / nphi,
                    phi_index: k % nphi,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(EnergyLandscape {
        z_tilde: zs,
        phi: phis,
        values,
        failures,
        l_tilde,
        quad_order: opts.quad_order,
        material: material.to_string(),
    })
}
