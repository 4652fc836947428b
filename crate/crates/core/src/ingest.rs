//! Synthetic demonstrations and preprocessing of raw recordings.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::avoidance::{AvoidanceParams, Obstacle, ObstacleCoupling};
use crate::dmp::{fit, DmpModel, FitOptions, DEFAULT_DT};
use crate::error::{invalid, Error, Result};
use crate::trajectory::{finite_differences, StateTriplet, Trajectory};

/// A recorded demonstration: possibly jittered timestamps and noisy
/// positions.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDemo {
    pub t: Vec<f64>,
    /// One row per sample.
    pub positions: Vec<Vec<f64>>,
    pub noise_sigma: Option<f64>,
}

impl RawDemo {
    pub fn new(t: Vec<f64>, positions: Vec<Vec<f64>>) -> Result<Self> {
        let d = Self { t, positions, noise_sigma: None };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t.len() != self.positions.len() {
            return Err(invalid("timestamp and position counts differ"));
        }
        let dims = self.dims();
        if dims == 0 || dims > Trajectory::MAX_DIMS {
            return Err(invalid(format!("raw demo dims must be in 1..=3, got {dims}")));
        }
        if self.positions.iter().any(|p| p.len() != dims || p.iter().any(|x| !x.is_finite())) {
            return Err(invalid("raw demo rows must be finite and of equal length"));
        }
        if self.t.iter().any(|t| !t.is_finite()) || self.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("timestamps must be finite and strictly increasing"));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Header `t,x0,x1,...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dims()).map(|d| format!("x{d}")));
        wtr.write_record(&header)?;
        for (t, p) in self.t.iter().zip(&self.positions) {
            let mut row = vec![t.to_string()];
            row.extend(p.iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let dims = header.len().saturating_sub(1);
        let ok = header.get(0) == Some("t") && (0..dims).all(|d| header.get(d + 1) == Some(format!("x{d}").as_str()));
        if !ok || dims == 0 {
            return Err(Error::Format(format!("expected header t,x0,x1,..., got {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut t = Vec::new();
        let mut positions = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Format(format!("row {}: {e}", i + 1)))?;
            if vals.len() != dims + 1 {
                return Err(Error::Format(format!("row {} has {} fields, expected {}", i + 1, vals.len(), dims + 1)));
            }
            t.push(vals[0]);
            positions.push(vals[1..].to_vec());
        }
        Self::new(t, positions)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Quintic minimum-jerk interpolation; returns `(x, v, a)` at `t`.
pub fn min_jerk(start: f64, goal: f64, duration: f64, t: f64) -> (f64, f64, f64) {
    let s = (t / duration).clamp(0.0, 1.0);
    let d = goal - start;
    let x = start + d * (10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5));
    if t <= 0.0 || t >= duration {
        return (x, 0.0, 0.0);
    }
    let v = d * (30.0 * s.powi(2) - 60.0 * s.powi(3) + 30.0 * s.powi(4)) / duration;
    let a = d * (60.0 * s - 180.0 * s.powi(2) + 120.0 * s.powi(3)) / (duration * duration);
    (x, v, a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    MinJerk,
    DmpRollout,
}

impl std::str::FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "min-jerk" => Ok(Profile::MinJerk),
            "dmp-rollout" => Ok(Profile::DmpRollout),
            other => Err(format!("unknown profile {other:?} (expected min-jerk or dmp-rollout)")),
        }
    }
}

/// A known avoidance style injected into a generated demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedAvoidance {
    pub obstacle: Obstacle,
    pub params: AvoidanceParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSpec {
    pub profile: Profile,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub duration: f64,
    /// Nominal sample period (s).
    pub dt: f64,
    /// Standard deviation of additive position noise (m).
    pub noise_sigma: f64,
    /// Timestamp jitter as a fraction of `dt`, below 0.5.
    pub jitter: f64,
    pub seed: u64,
    /// Forces a DMP rollout of the model fitted to the min-jerk profile,
    /// with this coupling added.
    pub avoidance: Option<InjectedAvoidance>,
    /// Model to roll out for the `dmp-rollout` profile; defaults to the
    /// model fitted to the min-jerk profile.
    pub model: Option<DmpModel>,
}

impl DemoSpec {
    pub fn min_jerk(start: Vec<f64>, goal: Vec<f64>, duration: f64) -> Self {
        Self {
            profile: Profile::MinJerk,
            start,
            goal,
            duration,
            dt: 0.01,
            noise_sigma: 0.0,
            jitter: 0.0,
            seed: 0,
            avoidance: None,
            model: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.start.len() != self.goal.len() || self.start.is_empty() || self.start.len() > Trajectory::MAX_DIMS {
            return Err(invalid("start and goal must have the same 1..=3 entries"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration must be positive"));
        }
        if !(self.dt > 0.0 && self.dt <= self.duration) {
            return Err(invalid("sample period must be positive and no longer than the duration"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise sigma must be non-negative"));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(invalid("jitter must be in [0, 0.5)"));
        }
        if let Some(a) = &self.avoidance {
            a.obstacle.validate(self.start.len())?;
            a.params.validate()?;
        }
        Ok(())
    }
}

/// A generated demo: what a sensor would record, plus the noise-free
/// trajectory on the nominal grid with exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDemo {
    pub raw: RawDemo,
    pub clean: Trajectory,
}

/// Noise-free min-jerk trajectory on a uniform grid with analytic
/// derivatives.
pub fn min_jerk_trajectory(start: &[f64], goal: &[f64], duration: f64, dt: f64) -> Result<Trajectory> {
    let n = (duration / dt).round() as usize + 1;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            start
                .iter()
                .zip(goal)
                .map(|(s, g)| {
                    let (x, v, a) = min_jerk(*s, *g, duration, t);
                    StateTriplet::new(x, v, a)
                })
                .collect()
        })
        .collect();
    Trajectory::new(dt, samples)
}

pub fn generate_synthetic_demo(spec: &DemoSpec) -> Result<SyntheticDemo> {
    spec.validate()?;
    let n = (spec.duration / spec.dt).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let t: Vec<f64> = (0..n)
        .map(|i| {
            let nominal = i as f64 * spec.dt;
            if spec.jitter > 0.0 && i > 0 && i + 1 < n {
                nominal + rng.random_range(-spec.jitter..spec.jitter) * spec.dt
            } else {
                nominal
            }
        })
        .collect();

    let min_jerk_clean = min_jerk_trajectory(&spec.start, &spec.goal, spec.duration, spec.dt)?;
    let rollout = spec.profile == Profile::DmpRollout || spec.avoidance.is_some();
    let (clean, mut positions): (Trajectory, Vec<Vec<f64>>) = if rollout {
        let model = match &spec.model {
            Some(m) if m.dims == spec.start.len() => m.clone(),
            Some(_) => return Err(invalid("model dimension does not match start/goal")),
            None => fit(&min_jerk_clean, &FitOptions::default())?,
        };
        let substeps = ((spec.dt / DEFAULT_DT).round() as usize).max(1);
        let fine_dt = spec.dt / substeps as f64;
        let coupling = spec
            .avoidance
            .as_ref()
            .map(|a| ObstacleCoupling::new(vec![a.obstacle.clone()], a.params));
        let couplings: Vec<&dyn crate::dmp::Coupling> = coupling.iter().map(|c| c as _).collect();
        let fine = model.rollout(&spec.start, &spec.goal, model.tau, fine_dt, (n - 1) * substeps + 1, &couplings)?;
        let clean = fine.decimate(substeps)?;
        let positions = t.iter().map(|&ti| interpolate(&fine, ti)).collect();
        (clean, positions)
    } else {
        let positions = t
            .iter()
            .map(|&ti| {
                spec.start
                    .iter()
                    .zip(&spec.goal)
                    .map(|(s, g)| min_jerk(*s, *g, spec.duration, ti).0)
                    .collect()
            })
            .collect();
        (min_jerk_clean, positions)
    };

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| invalid(e.to_string()))?;
        for p in &mut positions {
            for x in p.iter_mut() {
                *x += normal.sample(&mut rng);
            }
        }
    }
    let mut raw = RawDemo::new(t, positions)?;
    raw.noise_sigma = Some(spec.noise_sigma);
    Ok(SyntheticDemo { raw, clean })
}

/// Linear interpolation of positions at time `t` (clamped to the ends).
fn interpolate(traj: &Trajectory, t: f64) -> Vec<f64> {
    let s = (t / traj.dt()).clamp(0.0, (traj.len() - 1) as f64);
    let i = (s.floor() as usize).min(traj.len() - 2);
    let f = s - i as f64;
    let (a, b) = (traj.sample(i), traj.sample(i + 1));
    a.iter().zip(b).map(|(p, q)| p.x + f * (q.x - p.x)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Output sample period; the mean input period when absent.
    pub resample_dt: Option<f64>,
    pub hampel_window: usize,
    pub hampel_nsigma: f64,
    /// Moving-average window, applied forward and backward. 1 disables it.
    pub smooth_window: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { resample_dt: None, hampel_window: 7, hampel_nsigma: 3.0, smooth_window: 9 }
    }
}

impl PreprocessConfig {
    fn validate(&self) -> Result<()> {
        if self.hampel_window % 2 == 0 || self.smooth_window % 2 == 0 {
            return Err(invalid("filter windows must be odd"));
        }
        if !(self.hampel_nsigma > 0.0) {
            return Err(invalid("hampel threshold must be positive"));
        }
        if let Some(dt) = self.resample_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid("resample period must be positive"));
            }
        }
        Ok(())
    }
}

/// Resample, reject outliers, smooth and differentiate a raw demo.
///
/// The output time base starts at zero.
pub fn preprocess(raw: &RawDemo, cfg: &PreprocessConfig) -> Result<Trajectory> {
    cfg.validate()?;
    raw.validate()?;
    if raw.len() < 10 {
        return Err(Error::InsufficientData(format!("preprocessing needs at least 10 samples, got {}", raw.len())));
    }
    let span = raw.t[raw.len() - 1] - raw.t[0];
    let dt = cfg.resample_dt.unwrap_or(span / (raw.len() - 1) as f64);
    let n = (span / dt * (1.0 + 1e-12)).floor() as usize + 1;
    if n < 10 {
        return Err(Error::InsufficientData(format!("resampling at dt={dt} leaves {n} samples")));
    }

    let mut samples = vec![Vec::with_capacity(raw.dims()); n];
    for d in 0..raw.dims() {
        let x: Vec<f64> = raw.positions.iter().map(|p| p[d]).collect();
        let x = resample(&raw.t, &x, dt, n);
        let x = hampel(&x, cfg.hampel_window / 2, cfg.hampel_nsigma);
        let x = smooth(&smooth(&x, cfg.smooth_window / 2), cfg.smooth_window / 2);
        let (v, a) = finite_differences(&x, dt);
        for i in 0..n {
            samples[i].push(StateTriplet::new(x[i], v[i], a[i]));
        }
    }
    Trajectory::new(dt, samples)
}

fn resample(t: &[f64], x: &[f64], dt: f64, n: usize) -> Vec<f64> {
    let mut j = 0;
    (0..n)
        .map(|i| {
            let ti = t[0] + i as f64 * dt;
            while j + 2 < t.len() && t[j + 1] < ti {
                j += 1;
            }
            let f = ((ti - t[j]) / (t[j + 1] - t[j])).clamp(0.0, 1.0);
            if f == 0.0 {
                x[j]
            } else if f == 1.0 {
                x[j + 1]
            } else {
                x[j] + f * (x[j + 1] - x[j])
            }
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Replaces samples farther than `nsigma` scaled MADs from their window
/// median with that median.
pub fn hampel(x: &[f64], half: usize, nsigma: f64) -> Vec<f64> {
    let n = x.len();
    let mut buf = Vec::with_capacity(2 * half + 1);
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            buf.clear();
            buf.extend_from_slice(&x[lo..hi]);
            let m = median(&mut buf);
            for b in buf.iter_mut() {
                *b = (*b - m).abs();
            }
            let mad = 1.4826 * median(&mut buf);
            if (x[i] - m).abs() > nsigma * mad {
                m
            } else {
                x[i]
            }
        })
        .collect()
}

/// Centered moving average of width `2·half + 1` with odd (point)
/// reflection at the ends, which keeps linear segments unbiased.
pub fn smooth(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    if half == 0 || n < 2 {
        return x.to_vec();
    }
    let at = |j: isize| -> f64 {
        let last = n as isize - 1;
        if j < 0 {
            2.0 * x[0] - x[(-j).min(last) as usize]
        } else if j > last {
            2.0 * x[n - 1] - x[(2 * last - j).max(0) as usize]
        } else {
            x[j as usize]
        }
    };
    let w = (2 * half + 1) as f64;
    (0..n as isize)
        .map(|i| {
            let c = x[i as usize];
            // mean of offsets from the center sample, so constants pass exactly
            let s: f64 = (i - half as isize..=i + half as isize).map(|j| at(j) - c).sum();
            c + s / w
        })
        .collect()
}

/// Positions projected on their two principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2dProjection {
    pub mean: Vec<f64>,
    /// Two orthonormal rows of length `d`.
    pub components: [Vec<f64>; 2],
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub projected: Trajectory,
}

impl Pca2dProjection {
    pub fn project_point(&self, p: &[f64]) -> [f64; 2] {
        let c: Vec<f64> = p.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        [dot(&self.components[0], &c), dot(&self.components[1], &c)]
    }

    pub fn inverse_point(&self, q: [f64; 2]) -> Vec<f64> {
        (0..self.mean.len())
            .map(|d| self.mean[d] + q[0] * self.components[0][d] + q[1] * self.components[1][d])
            .collect()
    }

    /// Share of total variance kept by the two components.
    pub fn explained(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        (self.eigenvalues[0] + self.eigenvalues[1]) / total
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Principal-component projection of the positions to the plane.
///
/// Velocities and accelerations are projected with the same linear map.
/// Each component's largest-magnitude entry is made positive.
pub fn pca_project(traj: &Trajectory) -> Result<Pca2dProjection> {
    let d = traj.dims();
    if d < 2 {
        return Err(invalid("PCA projection needs at least 2 DoF"));
    }
    let n = traj.len();
    let pos = traj.positions();
    let mean: Vec<f64> = (0..d).map(|j| pos.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| pos[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateData("positions have zero variance".into()));
    }
    let component = |k: usize| -> Vec<f64> {
        let col: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if big < 0.0 {
            col.iter().map(|v| -v).collect()
        } else {
            col
        }
    };
    let components = [component(0), component(1)];
    let samples = traj
        .samples()
        .iter()
        .map(|s| {
            let x: Vec<f64> = s.iter().zip(&mean).map(|(t, m)| t.x - m).collect();
            let v: Vec<f64> = s.iter().map(|t| t.v).collect();
            let a: Vec<f64> = s.iter().map(|t| t.a).collect();
            components
                .iter()
                .map(|c| StateTriplet::new(dot(c, &x), dot(c, &v), dot(c, &a)))
                .collect()
        })
        .collect();
    Ok(Pca2dProjection {
        mean,
        components,
        eigenvalues,
        projected: Trajectory::new(traj.dt(), samples)?,
    })
}
