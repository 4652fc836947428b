//! Steering-based obstacle avoidance.
//!
//! The coupling rotates the current velocity by π/2 about the axis
//! `r = (x_obstacle − x) × ẋ` and scales it by the turning rate
//! `θ̇ = γ θ exp(−β |θ|)`, where θ is the angle between the velocity and the
//! direction to the obstacle. The rotated velocity always points away from
//! the obstacle, so the coupling bends the path around it.
//!
//! The style parameters (γ, β) are learned from a pair of demonstrations of
//! the same motion with and without the obstacle: the acceleration residual
//! between them is projected on the steering direction to recover θ̇, and
//! `log θ̇ − log θ = log γ − β θ` is solved by least squares.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dmp::{fit, phase_at, Coupling, DmpModel, FitOptions};
use crate::error::{invalid, Error, Result};
use crate::trajectory::Trajectory;

/// Speed and distance below which steering is undefined (m/s and m).
pub const EPS: f64 = 1e-9;

/// Relative size of `|d × v|` below which velocity and obstacle direction
/// count as parallel.
const PARALLEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceParams {
    /// Turning-rate magnitude γ (1/s).
    pub gamma: f64,
    /// Angular sensitivity β (1/rad).
    pub beta_oa: f64,
}

impl AvoidanceParams {
    pub fn new(gamma: f64, beta_oa: f64) -> Result<Self> {
        let p = Self { gamma, beta_oa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite() && self.beta_oa > 0.0 && self.beta_oa.is_finite()) {
            return Err(invalid(format!(
                "avoidance parameters must be positive and finite (gamma={}, beta_oa={})",
                self.gamma, self.beta_oa
            )));
        }
        Ok(())
    }

    /// Angle of maximal turning rate, `1/β`.
    pub fn peak_angle(&self) -> f64 {
        1.0 / self.beta_oa
    }

    /// Maximal turning rate, `γ / (β e)`.
    pub fn peak_rate(&self) -> f64 {
        self.gamma / (self.beta_oa * std::f64::consts::E)
    }
}

/// A point obstacle. The radius only matters for clearance metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub position: Vec<f64>,
    #[serde(default)]
    pub radius: f64,
}

impl Obstacle {
    pub fn new(position: Vec<f64>, radius: f64) -> Self {
        Self { position, radius }
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        if self.position.len() != dims {
            return Err(invalid(format!(
                "obstacle has {} coordinates, workspace has {dims}",
                self.position.len()
            )));
        }
        if self.position.iter().any(|p| !p.is_finite()) || !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(invalid("obstacle position must be finite and radius non-negative"));
        }
        Ok(())
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        self.position
            .iter()
            .zip(x)
            .map(|(o, p)| (o - p).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) fn embed(v: &[f64]) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for (o, x) in out.iter_mut().zip(v) {
        *o = *x;
    }
    out
}

/// Unsigned angle in `[0, π]` between `v` and the obstacle direction.
pub fn steering_angle(x: &[f64], v: &[f64], obstacle: &Obstacle) -> Result<f64> {
    let d = embed(&obstacle.position) - embed(x);
    let v = embed(v);
    if v.norm() <= EPS || d.norm() <= EPS {
        return Err(Error::UndefinedSteering);
    }
    Ok(d.cross(&v).norm().atan2(d.dot(&v)))
}

/// `θ̇ = γ θ exp(−β |θ|)`.
pub fn turning_rate(theta: f64, params: &AvoidanceParams) -> f64 {
    params.gamma * theta * (-params.beta_oa * theta.abs()).exp()
}

/// Unit axis of the π/2 rotation, or `None` when the system heads straight
/// at the obstacle (θ = 0, no steering).
///
/// When the obstacle is exactly behind (θ = π) the printed axis vanishes;
/// planar workspaces then use the out-of-plane normal and 3D workspaces the
/// lowest-index coordinate axis orthogonal to `v` (or, if none is, the one
/// least aligned with `v`, made orthogonal).
fn rotation_axis(d: &Vector3<f64>, v: &Vector3<f64>, dims: usize) -> Option<Vector3<f64>> {
    let r = d.cross(v);
    if r.norm() > PARALLEL_TOL * d.norm() * v.norm() {
        return Some(r.normalize());
    }
    if d.dot(v) > 0.0 {
        return None;
    }
    if dims <= 2 {
        return Some(Vector3::z());
    }
    let j = (0..3)
        .find(|&j| v[j] == 0.0)
        .unwrap_or_else(|| (0..3).fold(0, |best, j| if v[j].abs() < v[best].abs() { j } else { best }));
    let e = Vector3::ith(j, 1.0);
    let vhat = v.normalize();
    Some((e - vhat * e.dot(&vhat)).normalize())
}

/// Unit direction of the steering acceleration (`R v̂`), if defined.
fn steering_direction(x: &[f64], v: &[f64], obstacle: &Obstacle) -> Option<Vector3<f64>> {
    let d = embed(&obstacle.position) - embed(x);
    let v3 = embed(v);
    let speed = v3.norm();
    if speed <= EPS || d.norm() <= EPS {
        return None;
    }
    rotation_axis(&d, &v3, x.len()).map(|axis| axis.cross(&(v3 / speed)))
}

/// Acceleration `R ẋ θ̇` steering away from one obstacle.
///
/// Degenerate geometry (no motion, coincident obstacle, heading straight at
/// it) yields the zero vector.
pub fn avoidance_coupling(x: &[f64], v: &[f64], obstacle: &Obstacle, params: &AvoidanceParams) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    add_avoidance(x, v, obstacle, params, &mut out);
    out
}

fn add_avoidance(x: &[f64], v: &[f64], obstacle: &Obstacle, params: &AvoidanceParams, acc: &mut [f64]) {
    let Some(dir) = steering_direction(x, v, obstacle) else {
        return;
    };
    let Ok(theta) = steering_angle(x, v, obstacle) else {
        return;
    };
    let mag = embed(v).norm() * turning_rate(theta, params);
    for (a, c) in acc.iter_mut().zip(dir.iter()) {
        *a += mag * c;
    }
}

/// Avoidance coupling summed over a set of obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleCoupling {
    pub obstacles: Vec<Obstacle>,
    pub params: AvoidanceParams,
    /// Obstacles farther than this are skipped.
    pub influence_radius: Option<f64>,
}

impl ObstacleCoupling {
    pub fn new(obstacles: Vec<Obstacle>, params: AvoidanceParams) -> Self {
        Self { obstacles, params, influence_radius: None }
    }
}

impl Coupling for ObstacleCoupling {
    fn accumulate(&self, x: &[f64], v: &[f64], _k: f64, acc: &mut [f64]) {
        for o in &self.obstacles {
            if let Some(r) = self.influence_radius {
                if o.distance(x) > r {
                    continue;
                }
            }
            add_avoidance(x, v, o, &self.params, acc);
        }
    }
}

/// One observation of the steering law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurningSample {
    pub theta: f64,
    pub theta_dot: f64,
}

/// Recovers the `(θ, θ̇)` series from a demonstration perturbed by an
/// obstacle and its unperturbed baseline.
///
/// The baseline is encoded with `fit_opts`; its predicted acceleration at
/// each perturbed state is subtracted from the observed one and the
/// residual projected on the steering direction.
pub fn extract_turning_series(
    demo_obs: &Trajectory,
    demo_base: &Trajectory,
    obstacle: &Obstacle,
    fit_opts: &FitOptions,
) -> Result<Vec<TurningSample>> {
    if demo_obs.dims() != demo_base.dims() {
        return Err(invalid("perturbed and baseline demos differ in dimension"));
    }
    if (demo_obs.dt() - demo_base.dt()).abs() > 1e-9 * demo_base.dt() {
        return Err(invalid("perturbed and baseline demos must share the sample period"));
    }
    let baseline = fit(demo_base, fit_opts)?;
    extract_with_baseline(demo_obs, &baseline, obstacle)
}

/// As [`extract_turning_series`] with an already-encoded baseline.
pub fn extract_with_baseline(demo_obs: &Trajectory, baseline: &DmpModel, obstacle: &Obstacle) -> Result<Vec<TurningSample>> {
    obstacle.validate(demo_obs.dims())?;
    if baseline.dims != demo_obs.dims() {
        return Err(invalid("baseline model and demo differ in dimension"));
    }
    let mut series = Vec::new();
    for i in 0..demo_obs.len() {
        let x = demo_obs.position(i);
        let v = demo_obs.velocity(i);
        let Some(dir) = steering_direction(&x, &v, obstacle) else {
            continue;
        };
        let theta = steering_angle(&x, &v, obstacle)?;
        let k = phase_at(baseline.alpha_k, baseline.tau, demo_obs.time(i));
        let predicted = baseline.acceleration(&x, &v, k, &baseline.g, baseline.tau)?;
        let residual = embed(&demo_obs.acceleration(i)) - embed(&predicted);
        let theta_dot = residual.dot(&dir) / embed(&v).norm();
        series.push(TurningSample { theta, theta_dot });
    }
    if series.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} samples with defined steering geometry",
            series.len()
        )));
    }
    Ok(series)
}

/// Extracts the turning series from a demo pair and learns the style.
///
/// A pair whose positions agree to within `1e-9` of the baseline range
/// carries no avoidance information and is rejected as insufficient.
pub fn learn_from_pair(
    demo_obs: &Trajectory,
    demo_base: &Trajectory,
    obstacle: &Obstacle,
    fit_opts: &FitOptions,
    learn_opts: &LearnOptions,
) -> Result<(AvoidanceFit, Vec<TurningSample>)> {
    if demo_obs.dims() == demo_base.dims() {
        let n = demo_obs.len().min(demo_base.len());
        let deviation = (0..n)
            .map(|i| {
                let (a, b) = (demo_obs.position(i), demo_base.position(i));
                a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max);
        if demo_obs.len() == demo_base.len() && deviation <= 1e-9 * demo_base.range().max(f64::MIN_POSITIVE) {
            return Err(Error::InsufficientData("perturbed demo does not differ from the baseline".into()));
        }
    }
    let series = extract_turning_series(demo_obs, demo_base, obstacle, fit_opts)?;
    let fit = learn_params_with(&series, learn_opts)?;
    Ok((fit, series))
}

/// Sample filter applied before the log transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnOptions {
    /// Samples with |θ̇| at or below this are dropped (rad/s).
    pub min_turning_rate: f64,
    /// Samples with |θ| at or below this are dropped (rad).
    pub min_angle: f64,
    /// Samples with |θ̇| at or below this fraction of the largest |θ̇| are
    /// dropped. Noise dominates the log residual far from the obstacle.
    pub min_relative_rate: f64,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self { min_turning_rate: EPS, min_angle: EPS, min_relative_rate: 0.0 }
    }
}

/// Learned style plus regression diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceFit {
    pub params: AvoidanceParams,
    /// Coefficient of determination of the fitted `log θ̇`.
    pub r_squared: f64,
    pub samples_used: usize,
}

pub fn learn_params(series: &[TurningSample]) -> Result<AvoidanceParams> {
    learn_params_with(series, &LearnOptions::default()).map(|f| f.params)
}

/// Solves `log θ̇ − log θ = log γ − β θ` by batch least squares.
///
/// The fit is rejected as non-physical when the data show no decaying
/// sensitivity: either the fitted β is not positive, or the unconstrained
/// regression `log θ̇ = a + b log θ − β' θ` finds no positive β'.
pub fn learn_params_with(series: &[TurningSample], opts: &LearnOptions) -> Result<AvoidanceFit> {
    let peak = series
        .iter()
        .map(|s| s.theta_dot.abs())
        .filter(|td| td.is_finite())
        .fold(0.0, f64::max);
    let floor = opts.min_turning_rate.max(opts.min_relative_rate * peak);
    let usable: Vec<(f64, f64)> = series
        .iter()
        .map(|s| (s.theta.abs(), s.theta_dot.abs()))
        .filter(|(t, td)| *t > opts.min_angle && *td > floor && t.is_finite() && td.is_finite())
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable (θ, θ̇) samples, need at least 3",
            usable.len()
        )));
    }
    let m = usable.len();
    let log_rate = DVector::from_iterator(m, usable.iter().map(|(_, td)| td.ln()));
    let y = DVector::from_iterator(m, usable.iter().map(|(t, td)| td.ln() - t.ln()));
    let design = DMatrix::from_fn(m, 2, |i, j| if j == 0 { 1.0 } else { -usable[i].0 });
    let coef = least_squares(design, &y)?;
    let (log_gamma, beta) = (coef[0], coef[1]);
    if !(beta > 0.0) {
        return Err(Error::NonPhysicalFit(format!("fitted beta_oa = {beta} is not positive")));
    }

    let free = DMatrix::from_fn(m, 3, |i, j| match j {
        0 => 1.0,
        1 => usable[i].0.ln(),
        _ => -usable[i].0,
    });
    let free_coef = least_squares(free, &log_rate)?;
    if !(free_coef[2] > 1e-6 * beta.max(1.0)) {
        return Err(Error::NonPhysicalFit(format!(
            "turning rate shows no decaying sensitivity (unconstrained beta = {})",
            free_coef[2]
        )));
    }

    let params = AvoidanceParams::new(log_gamma.exp(), beta)?;
    let mean = log_rate.mean();
    let ss_tot: f64 = log_rate.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = usable
        .iter()
        .zip(log_rate.iter())
        .map(|((t, _), lr)| (lr - (log_gamma + t.ln() - beta * t)).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(AvoidanceFit { params, r_squared, samples_used: m })
}

fn least_squares(design: DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = design.shape();
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * m.max(n) as f64 * f64::EPSILON) {
        return Err(Error::NonPhysicalFit("regression is degenerate (no spread in θ)".into()));
    }
    svd.solve(y, 0.0).map_err(|e| invalid(e.to_string()))
}
