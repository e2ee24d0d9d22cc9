//! Uniformly sampled time series and their CSV + JSON sidecar format.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error("malformed trajectory file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Position samples `x` [m] (and optionally velocity `v` [m/s]) at rate `fs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub fs: f64,
    pub t0: f64,
    pub x: Vec<f64>,
    pub v: Option<Vec<f64>>,
    pub seed: Option<u64>,
    /// First sample index after which the run was cut short by instability.
    pub truncated_at: Option<usize>,
    /// Samples before this index are filter warm-up and should be ignored.
    pub valid_from: usize,
}

/// Metadata written next to the CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub fs: f64,
    pub t0: f64,
    pub seed: Option<u64>,
    pub truncated_at: Option<usize>,
    pub valid_from: usize,
    pub samples: usize,
    pub has_velocity: bool,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl Trajectory {
    pub fn new(fs: f64, x: Vec<f64>) -> Self {
        Self {
            fs,
            t0: 0.0,
            x,
            v: None,
            seed: None,
            truncated_at: None,
            valid_from: 0,
        }
    }

    pub fn with_velocity(mut self, v: Vec<f64>) -> Self {
        self.v = Some(v);
        self
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(TrajectoryError::Invalid("sample rate must be positive".into()));
        }
        if self.x.len() < 2 {
            return Err(TrajectoryError::Invalid("need at least two samples".into()));
        }
        if let Some(v) = &self.v {
            if v.len() != self.x.len() {
                return Err(TrajectoryError::Invalid("x and v lengths differ".into()));
            }
        }
        if self.truncated_at.is_none() && self.x.iter().any(|x| !x.is_finite()) {
            return Err(TrajectoryError::Invalid("non-finite sample".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fs
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.fs
    }

    pub fn duration(&self) -> f64 {
        self.x.len() as f64 / self.fs
    }

    /// Positions after the warm-up region.
    pub fn valid_x(&self) -> &[f64] {
        &self.x[self.valid_from.min(self.x.len())..]
    }

    /// Copy with the first `n` samples removed.
    pub fn skip(&self, n: usize) -> Self {
        let n = n.min(self.x.len());
        Self {
            fs: self.fs,
            t0: self.time(n),
            x: self.x[n..].to_vec(),
            v: self.v.as_ref().map(|v| v[n..].to_vec()),
            seed: self.seed,
            truncated_at: self.truncated_at.map(|k| k.saturating_sub(n)),
            valid_from: self.valid_from.saturating_sub(n),
        }
    }

    pub fn sidecar(&self, params: serde_json::Value) -> TrajectorySidecar {
        TrajectorySidecar {
            fs: self.fs,
            t0: self.t0,
            seed: self.seed,
            truncated_at: self.truncated_at,
            valid_from: self.valid_from,
            samples: self.x.len(),
            has_velocity: self.v.is_some(),
            params,
        }
    }

    /// Writes `t,x[,v]` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        match &self.v {
            Some(v) => {
                writeln!(w, "t,x,v")?;
                for (i, (x, v)) in self.x.iter().zip(v).enumerate() {
                    writeln!(w, "{:?},{:?},{:?}", self.time(i), x, v)?;
                }
            }
            None => {
                writeln!(w, "t,x")?;
                for (i, x) in self.x.iter().enumerate() {
                    writeln!(w, "{:?},{:?}", self.time(i), x)?;
                }
            }
        }
        Ok(())
    }

    /// Parses `t,x[,v]` rows. Without a sidecar the rate is taken from the
    /// first two time stamps.
    pub fn read_csv<R: std::io::Read>(r: R, sidecar: Option<&TrajectorySidecar>) -> Result<Self, TrajectoryError> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| TrajectoryError::Parse("empty file".into()))??;
        let has_v = match header.trim() {
            "t,x" => false,
            "t,x,v" => true,
            other => return Err(TrajectoryError::Parse(format!("unexpected header `{other}`"))),
        };
        let (mut ts, mut xs, mut vs) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| TrajectoryError::Parse(format!("line {}: {e}", n + 2)))?;
            if fields.len() != if has_v { 3 } else { 2 } {
                return Err(TrajectoryError::Parse(format!("line {}: wrong column count", n + 2)));
            }
            ts.push(fields[0]);
            xs.push(fields[1]);
            if has_v {
                vs.push(fields[2]);
            }
        }
        let traj = match sidecar {
            Some(s) => Self {
                fs: s.fs,
                t0: s.t0,
                x: xs,
                v: has_v.then_some(vs),
                seed: s.seed,
                truncated_at: s.truncated_at,
                valid_from: s.valid_from,
            },
            None => {
                if ts.len() < 2 {
                    return Err(TrajectoryError::Invalid("need at least two samples".into()));
                }
                let fs = (ts.len() - 1) as f64 / (ts[ts.len() - 1] - ts[0]);
                Self {
                    fs,
                    t0: ts[0],
                    x: xs,
                    v: has_v.then_some(vs),
                    seed: None,
                    truncated_at: None,
                    valid_from: 0,
                }
            }
        };
        traj.validate()?;
        Ok(traj)
    }

    /// Writes `path` (CSV) and `path` with a `.json` extension (sidecar).
    pub fn save(&self, path: &Path, params: serde_json::Value) -> Result<(), TrajectoryError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)?;
        let side = serde_json::to_string_pretty(&self.sidecar(params))?;
        std::fs::write(sidecar_path(path), side + "\n")?;
        Ok(())
    }

    /// Reads a CSV file, using its sidecar when present.
    pub fn load(path: &Path) -> Result<Self, TrajectoryError> {
        let side_path = sidecar_path(path);
        let sidecar: Option<TrajectorySidecar> = if side_path.exists() {
            Some(serde_json::from_str(&std::fs::read_to_string(side_path)?)?)
        } else {
            None
        };
        Self::read_csv(std::fs::File::open(path)?, sidecar.as_ref())
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}
