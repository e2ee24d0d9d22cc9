//! Magnetic field of uniformly magnetised cuboids and of the 2×2
//! checkerboard array.
//!
//! All closed forms are evaluated for a cube of unit side centred on the
//! origin and magnetised along `+z`, in units where `B̃ = B / (μ₀ M)` and
//! `r̃ = r / D`. Physical fields are obtained by translating, flipping the
//! sign for reversed polarity and scaling by `μ₀ M`.
//!
//! The array places four cubes of side `D` centred at `(±D/2, ±D/2, −D/2)`,
//! so the common top face is the plane `z = 0`. Cubes whose centres have
//! equal-signed `x` and `y` are magnetised along `+z`; the other two along
//! `−z`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::MU0;

pub type Vec3 = [f64; 3];

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Default exclusion radius around cube edges, in units of the cube side.
pub const DEFAULT_EDGE_EPS: f64 = 1e-9;

/// Typical remanent magnetisation of sintered N52 NdFeB (`B_r ≈ 1.4 T`).
pub const DEFAULT_MAGNETIZATION: f64 = 1.1e6;

/// Side length of the magnets used in the levitation experiments [m].
pub const DEFAULT_MAGNET_SIDE: f64 = 12.7e-3;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FieldError {
    #[error("evaluation point {point:?} lies within the edge exclusion zone of a magnet")]
    EdgeSingularity { point: Vec3 },
    #[error("evaluation point {point:?} lies inside or on the surface of a magnet")]
    InsideMagnet { point: Vec3 },
}

/// `F₁` helper: arctangent term of `B̃_z`.
fn f1(x: f64, y: f64, z: f64) -> f64 {
    let a = x + 0.5;
    let b = y + 0.5;
    let c = z + 0.5;
    let num = a * b;
    if num == 0.0 {
        return 0.0;
    }
    let r = (a * a + b * b + c * c).sqrt();
    (num / (c * r)).atan()
}

/// `F₂` helper: ratio inside the logarithms of `B̃_x` and `B̃_y`.
///
/// Written as `(r₁ + b) / (r₂ − c)` with `b = 1/2 − y`, `c = 1/2 + y`. Either
/// factor is rationalised when it would suffer cancellation, which makes the
/// ratio finite and accurate on the outward extensions of the cube edges.
fn f2(x: f64, y: f64, z: f64) -> f64 {
    let p = x + 0.5;
    let q = z + 0.5;
    let rho2 = p * p + q * q;
    let b = 0.5 - y;
    let c = 0.5 + y;
    let r1 = (rho2 + b * b).sqrt();
    let r2 = (rho2 + c * c).sqrt();
    match (b >= 0.0, c > 0.0) {
        (true, false) => (r1 + b) / (r2 - c),
        (true, true) => (r1 + b) * (r2 + c) / rho2,
        (false, true) => (r2 + c) / (r1 - b),
        // b < 0 and c <= 0 would need y > 1/2 and y <= -1/2 at once.
        (false, false) => unreachable!("inconsistent F2 branch"),
    }
}

fn distance_to_segment(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0);
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1], ap[2] - t * ab[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Distance from `p` to the nearest of the twelve edges of the unit cube.
fn distance_to_cube_edges(p: Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for su in [-0.5, 0.5] {
            for sv in [-0.5, 0.5] {
                let mut a = [0.0; 3];
                let mut b = [0.0; 3];
                a[axis] = -0.5;
                b[axis] = 0.5;
                a[u] = su;
                b[u] = su;
                a[v] = sv;
                b[v] = sv;
                best = best.min(distance_to_segment(p, a, b));
            }
        }
    }
    best
}

/// Field of the unit cube with the default edge exclusion radius.
pub fn unit_cube_field(r: Vec3) -> Result<Vec3, FieldError> {
    unit_cube_field_with(r, DEFAULT_EDGE_EPS)
}

/// Dimensionless field `B̃(r̃)` of a unit cube centred at the origin,
/// magnetised along `+z`. `edge_eps` is the exclusion radius around the cube
/// edges, in units of the side length.
pub fn unit_cube_field_with(r: Vec3, edge_eps: f64) -> Result<Vec3, FieldError> {
    let [x, y, z] = r;
    if x.abs() <= 0.5 && y.abs() <= 0.5 && z.abs() <= 0.5 {
        return Err(FieldError::InsideMagnet { point: r });
    }
    if distance_to_cube_edges(r) < edge_eps {
        return Err(FieldError::EdgeSingularity { point: r });
    }

    let bx = ((f2(-x, y, -z) * f2(x, y, z)) / (f2(x, y, -z) * f2(-x, y, z))).ln() / FOUR_PI;
    let by = ((f2(-y, x, -z) * f2(y, x, z)) / (f2(y, x, -z) * f2(-y, x, z))).ln() / FOUR_PI;
    let bz = -(f1(-x, y, z)
        + f1(-x, y, -z)
        + f1(-x, -y, z)
        + f1(-x, -y, -z)
        + f1(x, y, z)
        + f1(x, y, -z)
        + f1(x, -y, z)
        + f1(x, -y, -z))
        / FOUR_PI;

    let b = [bx, by, bz];
    if b.iter().all(|c| c.is_finite()) {
        Ok(b)
    } else {
        Err(FieldError::EdgeSingularity { point: r })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Up,
    Down,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Up => 1.0,
            Polarity::Down => -1.0,
        }
    }
}

/// A single cube magnet of side `side_length` magnetised along `±z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuboidMagnet {
    pub side_length: f64,
    pub magnetization: f64,
    pub center: Vec3,
    pub polarity: Polarity,
}

impl CuboidMagnet {
    /// Field in tesla at `r` (metres).
    pub fn field(&self, r: Vec3, edge_eps: f64) -> Result<Vec3, FieldError> {
        let d = self.side_length;
        let local = [
            (r[0] - self.center[0]) / d,
            (r[1] - self.center[1]) / d,
            (r[2] - self.center[2]) / d,
        ];
        let b = unit_cube_field_with(local, edge_eps).map_err(|e| relabel(e, r))?;
        let s = self.polarity.sign() * MU0 * self.magnetization;
        Ok([s * b[0], s * b[1], s * b[2]])
    }
}

fn relabel(e: FieldError, point: Vec3) -> FieldError {
    match e {
        FieldError::EdgeSingularity { .. } => FieldError::EdgeSingularity { point },
        FieldError::InsideMagnet { .. } => FieldError::InsideMagnet { point },
    }
}

/// Geometry and magnetisation of the 2×2 checkerboard array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetArraySpec {
    /// Magnet side length `D` [m].
    pub magnet_side: f64,
    /// Magnetisation `M` [A/m].
    pub magnetization: f64,
    /// Edge exclusion radius in units of `D`.
    #[serde(default = "default_edge_eps")]
    pub edge_eps: f64,
}

fn default_edge_eps() -> f64 {
    DEFAULT_EDGE_EPS
}

impl Default for MagnetArraySpec {
    fn default() -> Self {
        Self {
            magnet_side: DEFAULT_MAGNET_SIDE,
            magnetization: DEFAULT_MAGNETIZATION,
            edge_eps: DEFAULT_EDGE_EPS,
        }
    }
}

/// Dimensionless centres and polarities of the four array magnets.
pub const ARRAY_LAYOUT: [(Vec3, Polarity); 4] = [
    ([-0.5, -0.5, -0.5], Polarity::Up),
    ([-0.5, 0.5, -0.5], Polarity::Down),
    ([0.5, 0.5, -0.5], Polarity::Up),
    ([0.5, -0.5, -0.5], Polarity::Down),
];

/// Dimensionless field of the unit array (`D = 1`, `μ₀M = 1`).
pub fn unit_array_field(r: Vec3, edge_eps: f64) -> Result<Vec3, FieldError> {
    let mut total = [0.0; 3];
    for (center, polarity) in ARRAY_LAYOUT {
        let local = [r[0] - center[0], r[1] - center[1], r[2] - center[2]];
        let b = unit_cube_field_with(local, edge_eps).map_err(|e| relabel(e, r))?;
        let s = polarity.sign();
        for k in 0..3 {
            total[k] += s * b[k];
        }
    }
    Ok(total)
}

impl MagnetArraySpec {
    pub fn new(magnet_side: f64, magnetization: f64) -> Self {
        Self {
            magnet_side,
            magnetization,
            edge_eps: DEFAULT_EDGE_EPS,
        }
    }

    pub fn magnets(&self) -> [CuboidMagnet; 4] {
        ARRAY_LAYOUT.map(|(c, polarity)| CuboidMagnet {
            side_length: self.magnet_side,
            magnetization: self.magnetization,
            center: [
                c[0] * self.magnet_side,
                c[1] * self.magnet_side,
                c[2] * self.magnet_side,
            ],
            polarity,
        })
    }

    /// `μ₀ M` [T].
    pub fn field_scale(&self) -> f64 {
        MU0 * self.magnetization
    }

    /// Dimensionless field at dimensionless position `r̃ = r / D`.
    pub fn field_dimensionless(&self, r: Vec3) -> Result<Vec3, FieldError> {
        unit_array_field(r, self.edge_eps)
    }

    /// Field in tesla at `r` in metres.
    pub fn field(&self, r: Vec3) -> Result<Vec3, FieldError> {
        let d = self.magnet_side;
        let b = unit_array_field([r[0] / d, r[1] / d, r[2] / d], self.edge_eps)
            .map_err(|e| relabel(e, r))?;
        let s = self.field_scale();
        Ok([s * b[0], s * b[1], s * b[2]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldUnits {
    Dimensionless,
    #[serde(rename = "SI")]
    Si,
}

impl FieldUnits {
    pub fn label(self) -> &'static str {
        match self {
            FieldUnits::Dimensionless => "dimensionless",
            FieldUnits::Si => "SI",
        }
    }
}

/// Rectangular lattice of evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
}

impl Grid {
    /// Evenly spaced axis including both end points.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len() * self.zs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in row-major order (`z` fastest, then `y`, then `x`).
    pub fn points(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.len());
        for &x in &self.xs {
            for &y in &self.ys {
                for &z in &self.zs {
                    out.push([x, y, z]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub position: Vec3,
    pub field: Result<Vec3, FieldError>,
    pub units: FieldUnits,
}

/// Evaluates the array field on every grid point. Positions are interpreted
/// in the requested units (`r̃` or metres). Failures are kept per sample.
pub fn field_map(spec: &MagnetArraySpec, grid: &Grid, units: FieldUnits) -> Vec<FieldSample> {
    grid.points()
        .into_par_iter()
        .map(|position| {
            let field = match units {
                FieldUnits::Dimensionless => spec.field_dimensionless(position),
                FieldUnits::Si => spec.field(position),
            };
            FieldSample {
                position,
                field,
                units,
            }
        })
        .collect()
}

/// Writes `x,y,z,Bx,By,Bz,units`. Failed samples carry `NaN` field values.
pub fn write_field_csv<W: Write>(mut w: W, samples: &[FieldSample]) -> std::io::Result<()> {
    writeln!(w, "x,y,z,Bx,By,Bz,units")?;
    for s in samples {
        let b = s.field.unwrap_or([f64::NAN; 3]);
        writeln!(
            w,
            "{:?},{:?},{:?},{:?},{:?},{:?},{}",
            s.position[0],
            s.position[1],
            s.position[2],
            b[0],
            b[1],
            b[2],
            s.units.label()
        )?;
    }
    Ok(())
}
