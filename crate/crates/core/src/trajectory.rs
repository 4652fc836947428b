//! Uniformly sampled multi-DoF trajectories and their CSV form.
//!
//! The CSV layout is `t,dof0_x,dof0_v,dof0_a,dof1_x,...`, one row per sample.
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is lossless and repeated writes are byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Position, velocity and acceleration of one degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateTriplet {
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

impl StateTriplet {
    pub fn new(x: f64, v: f64, a: f64) -> Self {
        Self { x, v, a }
    }

    pub fn at_rest(x: f64) -> Self {
        Self { x, v: 0.0, a: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite() && self.a.is_finite()
    }
}

/// A uniformly sampled trajectory of `dims` degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    dims: usize,
    samples: Vec<Vec<StateTriplet>>,
}

impl Trajectory {
    pub const MAX_DIMS: usize = 3;

    pub fn new(dt: f64, samples: Vec<Vec<StateTriplet>>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("sample period must be positive, got {dt}")));
        }
        if samples.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "a trajectory needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        let dims = samples[0].len();
        if dims == 0 || dims > Self::MAX_DIMS {
            return Err(invalid(format!("trajectory dims must be in 1..=3, got {dims}")));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.len() != dims {
                return Err(invalid(format!(
                    "sample {i} has {} DoF, expected {dims}",
                    s.len()
                )));
            }
            if s.iter().any(|t| !t.is_finite()) {
                return Err(invalid(format!("sample {i} is not finite")));
            }
        }
        Ok(Self { dt, dims, samples })
    }

    /// Builds a trajectory from positions only; velocities and
    /// accelerations are filled by finite differences.
    pub fn from_positions(dt: f64, positions: &[Vec<f64>]) -> Result<Self> {
        let samples = positions
            .iter()
            .map(|p| p.iter().map(|&x| StateTriplet::at_rest(x)).collect())
            .collect();
        let mut traj = Self::new(dt, samples)?;
        traj.differentiate();
        Ok(traj)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time spanned from the first to the last sample.
    pub fn duration(&self) -> f64 {
        self.dt * (self.samples.len() - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.dt * i as f64
    }

    pub fn samples(&self) -> &[Vec<StateTriplet>] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &[StateTriplet] {
        &self.samples[i]
    }

    pub fn position(&self, i: usize) -> Vec<f64> {
        self.samples[i].iter().map(|s| s.x).collect()
    }

    pub fn velocity(&self, i: usize) -> Vec<f64> {
        self.samples[i].iter().map(|s| s.v).collect()
    }

    pub fn acceleration(&self, i: usize) -> Vec<f64> {
        self.samples[i].iter().map(|s| s.a).collect()
    }

    pub fn first_position(&self) -> Vec<f64> {
        self.position(0)
    }

    pub fn last_position(&self) -> Vec<f64> {
        self.position(self.len() - 1)
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }

    /// Largest per-DoF extent of the positions (max − min over samples).
    pub fn range(&self) -> f64 {
        (0..self.dims)
            .map(|d| {
                let (lo, hi) = self.samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                    (lo.min(s[d].x), hi.max(s[d].x))
                });
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Sum of Euclidean segment lengths.
    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (b.x - a.x).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }

    /// Overwrites velocities and accelerations with second-order finite
    /// differences of the positions.
    pub fn differentiate(&mut self) {
        let n = self.samples.len();
        for d in 0..self.dims {
            let x: Vec<f64> = self.samples.iter().map(|s| s[d].x).collect();
            let (v, a) = finite_differences(&x, self.dt);
            for i in 0..n {
                self.samples[i][d].v = v[i];
                self.samples[i][d].a = a[i];
            }
        }
    }

    /// Root-mean-square Euclidean position error against `other`, over the
    /// common prefix of samples.
    pub fn position_rmse(&self, other: &Trajectory) -> f64 {
        let n = self.len().min(other.len());
        let sum: f64 = (0..n)
            .map(|i| {
                self.samples[i]
                    .iter()
                    .zip(&other.samples[i])
                    .map(|(a, b)| (a.x - b.x).powi(2))
                    .sum::<f64>()
            })
            .sum();
        (sum / n as f64).sqrt()
    }

    /// Keeps every `step`-th sample.
    pub fn decimate(&self, step: usize) -> Result<Trajectory> {
        if step == 0 {
            return Err(invalid("decimation step must be positive"));
        }
        let samples = self.samples.iter().step_by(step).cloned().collect();
        Trajectory::new(self.dt * step as f64, samples)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        for d in 0..self.dims {
            header.push(format!("dof{d}_x"));
            header.push(format!("dof{d}_v"));
            header.push(format!("dof{d}_a"));
        }
        wtr.write_record(&header)?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut row = Vec::with_capacity(1 + 3 * self.dims);
            row.push(self.time(i).to_string());
            for t in s {
                row.push(t.x.to_string());
                row.push(t.v.to_string());
                row.push(t.a.to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let cols = header.len();
        if cols < 4 || (cols - 1) % 3 != 0 || &header[0] != "t" {
            return Err(Error::Format(format!(
                "expected header t,dof0_x,dof0_v,dof0_a,..., got {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let dims = (cols - 1) / 3;
        for d in 0..dims {
            for (k, suffix) in ["x", "v", "a"].iter().enumerate() {
                let expect = format!("dof{d}_{suffix}");
                if header[1 + 3 * d + k] != expect {
                    return Err(Error::Format(format!(
                        "column {} should be {expect}, got {}",
                        1 + 3 * d + k,
                        &header[1 + 3 * d + k]
                    )));
                }
            }
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Format(format!("{f:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            times.push(vals[0]);
            samples.push(
                (0..dims)
                    .map(|d| StateTriplet::new(vals[1 + 3 * d], vals[2 + 3 * d], vals[3 + 3 * d]))
                    .collect(),
            );
        }
        if times.len() < 2 {
            return Err(Error::InsufficientData("trajectory CSV has fewer than 2 rows".into()));
        }
        let dt = times[1] - times[0];
        let span = times[times.len() - 1] - times[0];
        let expected = dt * (times.len() - 1) as f64;
        if !(dt > 0.0) || (span - expected).abs() > 1e-6 * span.abs().max(1.0) {
            return Err(Error::Format("trajectory CSV is not uniformly sampled".into()));
        }
        Trajectory::new(dt, samples)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Central differences in the interior, second-order one-sided stencils at
/// the ends. Needs at least two samples; accelerations need four for the
/// one-sided stencil and fall back to the nearest interior value otherwise.
pub fn finite_differences(x: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut v = vec![0.0; n];
    let mut a = vec![0.0; n];
    if n < 2 {
        return (v, a);
    }
    if n == 2 {
        let s = (x[1] - x[0]) / dt;
        return (vec![s, s], a);
    }
    for i in 1..n - 1 {
        v[i] = (x[i + 1] - x[i - 1]) / (2.0 * dt);
        a[i] = ((x[i + 1] - x[i]) - (x[i] - x[i - 1])) / (dt * dt);
    }
    // Written in differences so constant input gives exact zeros.
    v[0] = (3.0 * (x[1] - x[0]) + (x[1] - x[2])) / (2.0 * dt);
    v[n - 1] = (3.0 * (x[n - 1] - x[n - 2]) - (x[n - 2] - x[n - 3])) / (2.0 * dt);
    if n >= 4 {
        a[0] = (2.0 * (x[0] - x[1]) - 3.0 * (x[1] - x[2]) + (x[2] - x[3])) / (dt * dt);
        a[n - 1] = (2.0 * (x[n - 1] - x[n - 2]) - 3.0 * (x[n - 2] - x[n - 3]) + (x[n - 3] - x[n - 4])) / (dt * dt);
    } else {
        a[0] = a[1];
        a[n - 1] = a[n - 2];
    }
    (v, a)
}
