//! Discrete dynamic movement primitives on the object frame.
//!
//! Each DoF follows a critically damped spring-damper pulled toward the goal
//! `g` and perturbed by a phase-dependent forcing term plus any number of
//! reactive couplings:
//!
//! ```text
//! ẍ = [α (β (g − x) − τ ẋ) + f(k)] / τ²  +  Σ couplings(x, ẋ, k)
//! τ k̇ = −α_k k,   k(0) = 1
//! f(k) = k · Σ wᵢ Ψᵢ(k) / Σ Ψᵢ(k),   Ψᵢ(k) = exp(−hᵢ (k − cᵢ)²)
//! ```
//!
//! With `τ = 1` this is exactly the classic object-frame model
//! `τẍ = α(β(g − x) − ẋ) + f`. Scaling the velocity by `τ` keeps the system
//! critically damped for every `τ` when `β = α/4`, and makes rollouts that
//! share the ratio `dt/τ` identical up to time rescaling.
//!
//! Couplings are plain accelerations: they add to `ẍ` directly and are not
//! scaled by `τ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::trajectory::{StateTriplet, Trajectory};

pub const DEFAULT_ALPHA: f64 = 25.0;
pub const DEFAULT_ALPHA_K: f64 = 8.0;
pub const DEFAULT_N_BASIS: usize = 50;
pub const DEFAULT_DT: f64 = 1e-3;

/// An acceleration perturbation evaluated at the current state and phase.
///
/// Implementations add their contribution into `acc` (length = DoF count).
pub trait Coupling: Send + Sync {
    fn accumulate(&self, x: &[f64], v: &[f64], k: f64, acc: &mut [f64]);
}

impl<F> Coupling for F
where
    F: Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync,
{
    fn accumulate(&self, x: &[f64], v: &[f64], k: f64, acc: &mut [f64]) {
        for (a, c) in acc.iter_mut().zip(self(x, v, k)) {
            *a += c;
        }
    }
}

/// Phase of the canonical system at time `t`.
pub fn phase_at(alpha_k: f64, tau: f64, t: f64) -> f64 {
    (-alpha_k * t / tau).exp()
}

/// Samples the canonical system at `n_steps` instants spaced by `dt`.
///
/// The linear decay is stepped with its exact per-step factor
/// `exp(−α_k dt / τ)`, so `k[n]` equals the closed form at `t = n·dt`.
pub fn canonical_rollout(alpha_k: f64, tau: f64, dt: f64, n_steps: usize) -> Result<Vec<f64>> {
    check_positive("alpha_k", alpha_k)?;
    check_positive("tau", tau)?;
    check_positive("dt", dt)?;
    if n_steps == 0 {
        return Err(invalid("n_steps must be at least 1"));
    }
    Ok((0..n_steps).map(|n| phase_at(alpha_k, tau, n as f64 * dt)).collect())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Gaussian basis functions over the phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
}

impl Basis {
    /// Centers spaced like the canonical decay, `cᵢ = exp(−α_k i/(N−1))`, so
    /// they are evenly spread in time. Widths are `1/(c_{i+1} − cᵢ)²`, the
    /// last one repeating its neighbour.
    pub fn exponential(n: usize, alpha_k: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("basis needs at least one function"));
        }
        check_positive("alpha_k", alpha_k)?;
        if n == 1 {
            return Ok(Self { centers: vec![1.0], widths: vec![1.0] });
        }
        let centers: Vec<f64> = (0..n)
            .map(|i| (-alpha_k * i as f64 / (n - 1) as f64).exp())
            .collect();
        let mut widths: Vec<f64> = centers.windows(2).map(|w| 1.0 / (w[1] - w[0]).powi(2)).collect();
        widths.push(widths[n - 2]);
        Ok(Self { centers, widths })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Normalized activations scaled by the phase: `k Ψᵢ(k) / Σ Ψ(k)`.
    ///
    /// Writes into `out` and fails when every activation underflows.
    pub fn regressors(&self, k: f64, out: &mut [f64]) -> Result<()> {
        regressors(&self.centers, &self.widths, k, out)
    }
}

fn regressors(centers: &[f64], widths: &[f64], k: f64, out: &mut [f64]) -> Result<()> {
    if k == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return Ok(());
    }
    let mut sum = 0.0;
    for ((o, c), h) in out.iter_mut().zip(centers).zip(widths) {
        let psi = (-h * (k - c) * (k - c)).exp();
        *o = psi;
        sum += psi;
    }
    if !(sum >= f64::MIN_POSITIVE) {
        return Err(Error::DegenerateBasis { phase: k });
    }
    let scale = k / sum;
    out.iter_mut().for_each(|o| *o *= scale);
    Ok(())
}

/// Options for fitting a model to a demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub n_basis: usize,
    pub alpha: f64,
    pub alpha_k: f64,
    /// Temporal scale; the demo duration when absent.
    pub tau: Option<f64>,
    /// Attractor; the last demo position when absent.
    pub goal: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_basis: DEFAULT_N_BASIS,
            alpha: DEFAULT_ALPHA,
            alpha_k: DEFAULT_ALPHA_K,
            tau: None,
            goal: None,
        }
    }
}

/// A learned absolute skill: spring-damper gains, phase basis and weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmpModel {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub alpha_k: f64,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    /// One row per basis function, one column per DoF.
    pub weights: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    pub g: Vec<f64>,
    pub dims: usize,
}

impl DmpModel {
    /// A model with the default exponential basis and all weights zero.
    pub fn unforced(alpha: f64, tau: f64, alpha_k: f64, n_basis: usize, x0: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let basis = Basis::exponential(n_basis, alpha_k)?;
        let dims = x0.len();
        let model = Self {
            alpha,
            beta: alpha / 4.0,
            tau,
            alpha_k,
            weights: vec![vec![0.0; dims]; basis.len()],
            centers: basis.centers,
            widths: basis.widths,
            x0,
            g,
            dims,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("alpha", self.alpha)?;
        check_positive("beta", self.beta)?;
        check_positive("tau", self.tau)?;
        check_positive("alpha_k", self.alpha_k)?;
        if (self.beta - self.alpha / 4.0).abs() > 1e-12 * self.alpha {
            return Err(invalid(format!(
                "beta must equal alpha/4 for critical damping (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        if !(1..=Trajectory::MAX_DIMS).contains(&self.dims) {
            return Err(invalid(format!("dims must be in 1..=3, got {}", self.dims)));
        }
        let n = self.centers.len();
        if n == 0 {
            return Err(invalid("model needs at least one basis function"));
        }
        if self.widths.len() != n || self.weights.len() != n {
            return Err(invalid("centers, widths and weights must have equal length"));
        }
        if self.widths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(invalid("basis widths must be positive"));
        }
        if self.centers.iter().any(|c| !c.is_finite()) || self.centers.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("basis centers must be finite and strictly decreasing"));
        }
        if self.weights.iter().any(|w| w.len() != self.dims || w.iter().any(|x| !x.is_finite())) {
            return Err(invalid("every weight row needs one finite entry per DoF"));
        }
        if self.x0.len() != self.dims || self.g.len() != self.dims {
            return Err(invalid("x0 and g must have one entry per DoF"));
        }
        if self.x0.iter().chain(&self.g).any(|v| !v.is_finite()) {
            return Err(invalid("x0 and g must be finite"));
        }
        Ok(())
    }

    pub fn n_basis(&self) -> usize {
        self.centers.len()
    }

    pub fn basis(&self) -> Basis {
        Basis { centers: self.centers.clone(), widths: self.widths.clone() }
    }

    /// Forcing contribution for one DoF at phase `k ∈ [0, 1]`.
    pub fn forcing_term(&self, k: f64, dof: usize) -> Result<f64> {
        if dof >= self.dims {
            return Err(invalid(format!("DoF index {dof} out of range for {} dims", self.dims)));
        }
        let mut f = vec![0.0; self.dims];
        self.forcing(k, &mut f)?;
        Ok(f[dof])
    }

    /// Forcing contribution for every DoF at phase `k`, written into `out`.
    pub fn forcing(&self, k: f64, out: &mut [f64]) -> Result<()> {
        if !(0.0..=1.0).contains(&k) {
            return Err(invalid(format!("phase must lie in [0, 1], got {k}")));
        }
        let mut r = vec![0.0; self.n_basis()];
        regressors(&self.centers, &self.widths, k, &mut r)?;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (ri, wi) in r.iter().zip(&self.weights) {
            for (o, w) in out.iter_mut().zip(wi) {
                *o += ri * w;
            }
        }
        Ok(())
    }

    /// Acceleration of the uncoupled system at state `(x, v)` and phase `k`,
    /// pulled toward `g` with temporal scale `tau`.
    pub fn acceleration(&self, x: &[f64], v: &[f64], k: f64, g: &[f64], tau: f64) -> Result<Vec<f64>> {
        let mut f = vec![0.0; self.dims];
        self.forcing(k, &mut f)?;
        Ok((0..self.dims)
            .map(|d| (self.alpha * (self.beta * (g[d] - x[d]) - tau * v[d]) + f[d]) / (tau * tau))
            .collect())
    }

    /// Rolls out from `x0` at rest toward `g` for `n_steps` samples by
    /// explicit Euler at step `dt`.
    pub fn rollout(
        &self,
        x0: &[f64],
        g: &[f64],
        tau: f64,
        dt: f64,
        n_steps: usize,
        couplings: &[&dyn Coupling],
    ) -> Result<Trajectory> {
        if n_steps < 2 {
            return Err(invalid("a rollout needs at least 2 steps"));
        }
        let mut state = DmpState::new(self, x0, g, tau, dt)?;
        let mut samples = Vec::with_capacity(n_steps);
        for _ in 0..n_steps {
            let a = state.acceleration(couplings)?;
            samples.push(
                (0..self.dims)
                    .map(|d| StateTriplet::new(state.x[d], state.v[d], a[d]))
                    .collect(),
            );
            state.advance(&a)?;
        }
        Trajectory::new(dt, samples)
    }

    /// Rollout with the model's own start, goal and temporal scale.
    pub fn reproduce(&self, dt: f64, n_steps: usize) -> Result<Trajectory> {
        self.rollout(&self.x0, &self.g, self.tau, dt, n_steps, &[])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

/// Integration state of one model rollout.
#[derive(Debug, Clone)]
pub struct DmpState<'a> {
    model: &'a DmpModel,
    g: Vec<f64>,
    tau: f64,
    dt: f64,
    step: usize,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl<'a> DmpState<'a> {
    pub fn new(model: &'a DmpModel, x0: &[f64], g: &[f64], tau: f64, dt: f64) -> Result<Self> {
        check_positive("tau", tau)?;
        check_positive("dt", dt)?;
        if x0.len() != model.dims || g.len() != model.dims {
            return Err(invalid(format!(
                "start and goal must have {} entries (got {} and {})",
                model.dims,
                x0.len(),
                g.len()
            )));
        }
        Ok(Self {
            model,
            g: g.to_vec(),
            tau,
            dt,
            step: 0,
            x: x0.to_vec(),
            v: vec![0.0; model.dims],
        })
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn phase(&self) -> f64 {
        phase_at(self.model.alpha_k, self.tau, self.time())
    }

    /// Total acceleration at the current state including `couplings`.
    pub fn acceleration(&self, couplings: &[&dyn Coupling]) -> Result<Vec<f64>> {
        let k = self.phase();
        let mut a = self.model.acceleration(&self.x, &self.v, k, &self.g, self.tau)?;
        for c in couplings {
            c.accumulate(&self.x, &self.v, k, &mut a);
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: self.step });
        }
        Ok(a)
    }

    /// One explicit Euler step with the acceleration evaluated at the
    /// current state.
    pub fn advance(&mut self, a: &[f64]) -> Result<()> {
        for d in 0..self.x.len() {
            self.x[d] += self.dt * self.v[d];
            self.v[d] += self.dt * a[d];
        }
        self.step += 1;
        if self.x.iter().chain(&self.v).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: self.step });
        }
        Ok(())
    }
}

/// Forcing values a demonstration requires of the model, one row per
/// sample: `τ² a − α (β (g − x) − τ v)`.
pub fn forcing_targets(demo: &Trajectory, alpha: f64, tau: f64, g: &[f64]) -> Vec<Vec<f64>> {
    let beta = alpha / 4.0;
    demo.samples()
        .iter()
        .map(|s| {
            s.iter()
                .zip(g)
                .map(|(st, gd)| tau * tau * st.a - alpha * (beta * (gd - st.x) - tau * st.v))
                .collect()
        })
        .collect()
}

/// Least-squares weights mapping basis regressors at `phases` onto
/// `targets` (one row per phase, one column per DoF).
///
/// A single SVD solve serves every DoF; rank deficiency yields the
/// minimum-norm solution.
pub fn fit_forcing_weights(basis: &Basis, phases: &[f64], targets: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if phases.len() != targets.len() {
        return Err(invalid("one target row per phase is required"));
    }
    if phases.is_empty() {
        return Err(Error::InsufficientData("no samples to fit".into()));
    }
    let dims = targets[0].len();
    let n = basis.len();
    let m = phases.len();
    let mut design = DMatrix::<f64>::zeros(m, n);
    let mut row = vec![0.0; n];
    for (i, &k) in phases.iter().enumerate() {
        basis.regressors(k, &mut row)?;
        for j in 0..n {
            design[(i, j)] = row[j];
        }
    }
    let rhs = DMatrix::from_fn(m, dims, |i, d| targets[i][d]);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(vec![vec![0.0; dims]; n]);
    }
    let cutoff = smax * m.max(n) as f64 * f64::EPSILON;
    let w = svd.solve(&rhs, cutoff).map_err(|e| invalid(e.to_string()))?;
    Ok((0..n).map(|j| (0..dims).map(|d| w[(j, d)]).collect()).collect())
}

/// True when the trajectory carries no derivative information.
fn lacks_derivatives(demo: &Trajectory) -> bool {
    demo.samples().iter().flatten().all(|s| s.v == 0.0 && s.a == 0.0)
}

/// Fits a model to one demonstration.
///
/// Velocities and accelerations come from the demo when present, otherwise
/// from finite differences of its positions.
pub fn fit(demo: &Trajectory, opts: &FitOptions) -> Result<DmpModel> {
    if demo.len() < 2 {
        return Err(invalid("demo needs at least 2 samples"));
    }
    check_positive("alpha", opts.alpha)?;
    check_positive("alpha_k", opts.alpha_k)?;
    let owned;
    let demo = if lacks_derivatives(demo) {
        let mut d = demo.clone();
        d.differentiate();
        owned = d;
        &owned
    } else {
        demo
    };
    let tau = opts.tau.unwrap_or_else(|| demo.duration());
    check_positive("tau", tau)?;
    let g = match &opts.goal {
        Some(g) if g.len() == demo.dims() => g.clone(),
        Some(g) => return Err(invalid(format!("goal has {} entries, demo has {} DoF", g.len(), demo.dims()))),
        None => demo.last_position(),
    };
    let basis = Basis::exponential(opts.n_basis, opts.alpha_k)?;
    let phases: Vec<f64> = (0..demo.len()).map(|i| phase_at(opts.alpha_k, tau, demo.time(i))).collect();
    let targets = forcing_targets(demo, opts.alpha, tau, &g);
    let weights = fit_forcing_weights(&basis, &phases, &targets)?;
    let model = DmpModel {
        alpha: opts.alpha,
        beta: opts.alpha / 4.0,
        tau,
        alpha_k: opts.alpha_k,
        centers: basis.centers,
        widths: basis.widths,
        weights,
        x0: demo.first_position(),
        g,
        dims: demo.dims(),
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straight-line evaluation of the normalized mixture, independent of
    /// `Basis::regressors`.
    fn forcing_oracle(c: &[f64], h: &[f64], w: &[f64], k: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..c.len() {
            let psi = (-h[i] * (k - c[i]).powi(2)).exp();
            num += w[i] * psi;
            den += psi;
        }
        num / den * k
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize, dims: usize, scale: f64) -> DmpModel {
        let x0: Vec<f64> = (0..dims).map(|_| rng.random_range(-0.5..0.5)).collect();
        let g: Vec<f64> = (0..dims).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut m = DmpModel::unforced(DEFAULT_ALPHA, 1.0, DEFAULT_ALPHA_K, n, x0, g).unwrap();
        if scale > 0.0 {
            for row in &mut m.weights {
                for w in row.iter_mut() {
                    *w = rng.random_range(-scale..scale);
                }
            }
        }
        m
    }

    fn min_jerk(x0: f64, g: f64, duration: f64, dt: f64) -> Trajectory {
        let n = (duration / dt).round() as usize + 1;
        let samples = (0..n)
            .map(|i| {
                let s = i as f64 * dt / duration;
                let d = g - x0;
                let x = x0 + d * (10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5));
                let v = d * (30.0 * s.powi(2) - 60.0 * s.powi(3) + 30.0 * s.powi(4)) / duration;
                let a = d * (60.0 * s - 180.0 * s.powi(2) + 120.0 * s.powi(3)) / duration.powi(2);
                vec![StateTriplet::new(x, v, a)]
            })
            .collect();
        Trajectory::new(dt, samples).unwrap()
    }

    #[test]
    fn canonical_single_step_is_initial_condition() {
        assert_eq!(canonical_rollout(3.0, 0.7, 0.01, 1).unwrap(), vec![1.0]);
    }

    #[test]
    fn canonical_matches_closed_form() {
        let k = canonical_rollout(4.0, 2.0, 0.001, 2001).unwrap();
        let exact = (-4.0f64).exp();
        assert!(((k[2000] - exact) / exact).abs() < 1e-3);
        let k = canonical_rollout(1.0, 1.0, 1e-4, 10_001).unwrap();
        assert!((k[10_000] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn canonical_strictly_decreasing_in_unit_interval() {
        let k = canonical_rollout(8.0, 0.5, 0.01, 300).unwrap();
        assert_eq!(k[0], 1.0);
        assert!(k.windows(2).all(|w| w[1] < w[0]));
        assert!(k.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn canonical_rejects_bad_arguments() {
        assert!(canonical_rollout(0.0, 1.0, 0.1, 3).is_err());
        assert!(canonical_rollout(1.0, -1.0, 0.1, 3).is_err());
        assert!(canonical_rollout(1.0, 1.0, 0.0, 3).is_err());
        assert!(canonical_rollout(1.0, 1.0, 0.1, 0).is_err());
    }

    #[test]
    fn basis_layout() {
        let b = Basis::exponential(10, 8.0).unwrap();
        assert_eq!(b.centers[0], 1.0);
        assert!((b.centers[9] - (-8.0f64).exp()).abs() < 1e-15);
        assert!(b.centers.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(b.widths[9], b.widths[8]);
        assert!((b.widths[0] - 1.0 / (b.centers[1] - b.centers[0]).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn zero_weights_give_zero_forcing() {
        let m = DmpModel::unforced(25.0, 1.0, 8.0, 20, vec![0.0], vec![1.0]).unwrap();
        for k in [1.0, 0.5, 0.1, 1e-3] {
            assert_eq!(m.forcing_term(k, 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_basis_normalizes_to_phase() {
        let mut m = DmpModel::unforced(25.0, 1.0, 8.0, 1, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        m.weights[0] = vec![3.5, -2.0];
        for k in [1.0, 0.7, 0.2, 0.01] {
            assert!((m.forcing_term(k, 0).unwrap() - 3.5 * k).abs() < 1e-15);
            assert!((m.forcing_term(k, 1).unwrap() + 2.0 * k).abs() < 1e-15);
        }
    }

    #[test]
    fn forcing_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_model(&mut rng, 10, 1, 50.0);
        let w: Vec<f64> = m.weights.iter().map(|r| r[0]).collect();
        for k in [0.5, 0.93, 0.031] {
            let want = forcing_oracle(&m.centers, &m.widths, &w, k);
            assert!((m.forcing_term(k, 0).unwrap() - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn forcing_rejects_uncovered_phase() {
        let mut m = DmpModel::unforced(25.0, 1.0, 8.0, 2, vec![0.0], vec![1.0]).unwrap();
        m.centers = vec![1.0, 0.99];
        m.widths = vec![1e6, 1e6];
        assert!(matches!(m.forcing_term(0.1, 0), Err(Error::DegenerateBasis { .. })));
    }

    #[test]
    fn model_validation() {
        let mut m = DmpModel::unforced(25.0, 1.0, 8.0, 5, vec![0.0], vec![1.0]).unwrap();
        m.beta = 7.0;
        assert!(m.validate().is_err());
        let mut m = DmpModel::unforced(25.0, 1.0, 8.0, 5, vec![0.0], vec![1.0]).unwrap();
        m.centers.swap(0, 1);
        assert!(m.validate().is_err());
        let mut m = DmpModel::unforced(25.0, 1.0, 8.0, 5, vec![0.0], vec![1.0]).unwrap();
        m.widths[2] = 0.0;
        assert!(m.validate().is_err());
        assert!(DmpModel::unforced(-1.0, 1.0, 8.0, 5, vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn unforced_rollout_converges_without_overshoot() {
        let m = DmpModel::unforced(4.0, 1.0, 8.0, 10, vec![0.0], vec![1.0]).unwrap();
        let traj = m.rollout(&[0.0], &[1.0], 1.0, 1e-3, 5001, &[]).unwrap();
        let last = traj.last_position()[0];
        assert!((last - 1.0).abs() < 1e-3, "x(5τ) = {last}");
        assert!(traj.samples().iter().all(|s| s[0].x <= 1.0));
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = random_model(&mut rng, 10, 2, 0.0);
        m.weights.iter_mut().flatten().for_each(|w| *w = 0.0);
        let traj = m.rollout(&[0.2, 0.3], &[0.2, 0.3], 1.0, 1e-3, 500, &[]).unwrap();
        for s in traj.samples() {
            assert_eq!((s[0].x, s[1].x), (0.2, 0.3));
            assert_eq!((s[0].v, s[1].v), (0.0, 0.0));
        }
    }

    #[test]
    fn exact_family_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = random_model(&mut rng, 20, 2, 200.0);
        // Run long enough that the demo settles on the goal, so the
        // fitted attractor read from the last sample matches.
        let demo = truth.reproduce(1e-3, 4001).unwrap();
        let opts = FitOptions { n_basis: 20, tau: Some(truth.tau), ..Default::default() };
        let fitted = fit(&demo, &opts).unwrap();
        let again = fitted.reproduce(1e-3, demo.len()).unwrap();
        let rmse = again.position_rmse(&demo);
        assert!(rmse < 1e-6 * demo.range(), "rmse {rmse}");
    }

    #[test]
    fn analytic_unforced_demo_fits_zero_forcing() {
        let (alpha, tau, x0, g) = (25.0, 1.0, 0.1, 0.6);
        let lam = alpha / (2.0 * tau);
        let dt = 1e-3;
        let samples = (0..1001)
            .map(|i| {
                let t = i as f64 * dt;
                let e = (-lam * t).exp();
                let x = g - (g - x0) * (1.0 + lam * t) * e;
                let v = (g - x0) * lam * lam * t * e;
                let a = (g - x0) * lam * lam * (1.0 - lam * t) * e;
                vec![StateTriplet::new(x, v, a)]
            })
            .collect();
        let demo = Trajectory::new(dt, samples).unwrap();
        let opts = FitOptions { tau: Some(tau), goal: Some(vec![g]), ..Default::default() };
        let targets = forcing_targets(&demo, alpha, tau, &[g]);
        assert!(targets.iter().all(|t| t[0].abs() < 1e-12));
        let m = fit(&demo, &opts).unwrap();
        for i in (0..demo.len()).step_by(50) {
            let k = phase_at(m.alpha_k, tau, demo.time(i));
            assert!((m.forcing_term(k, 0).unwrap() - targets[i][0]).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_demo_yields_zero_weights() {
        let samples = vec![vec![StateTriplet::at_rest(0.3)]; 200];
        let demo = Trajectory::new(0.01, samples).unwrap();
        let m = fit(&demo, &FitOptions::default()).unwrap();
        assert!(m.weights.iter().flatten().all(|w| *w == 0.0));
        assert_eq!(m.g, vec![0.3]);
    }

    #[test]
    fn fit_rejects_mismatched_goal() {
        let demo = min_jerk(0.0, 1.0, 1.0, 0.01);
        let opts = FitOptions { goal: Some(vec![1.0, 2.0]), ..Default::default() };
        assert!(fit(&demo, &opts).is_err());
    }

    #[test]
    fn fit_differentiates_position_only_demo() {
        let exact = min_jerk(0.0, 0.4, 1.0, 1e-3);
        let pos_only: Vec<Vec<StateTriplet>> = exact
            .samples()
            .iter()
            .map(|s| vec![StateTriplet::at_rest(s[0].x)])
            .collect();
        let demo = Trajectory::new(1e-3, pos_only).unwrap();
        let m = fit(&demo, &FitOptions::default()).unwrap();
        let out = m.reproduce(1e-3, demo.len()).unwrap();
        assert!(out.position_rmse(&exact) < 0.02 * exact.range());
    }

    #[test]
    fn min_jerk_fit_and_new_goal() {
        let demo = min_jerk(0.0, 0.4, 1.0, 1e-3);
        let m = fit(&demo, &FitOptions::default()).unwrap();
        let out = m.reproduce(1e-3, demo.len()).unwrap();
        let rmse = out.position_rmse(&demo);
        assert!(rmse < 0.02 * demo.range(), "rmse {rmse}");

        let g2 = [0.7];
        let out = m.rollout(&[0.0], &g2, m.tau, 1e-3, 10 * 1000 + 1, &[]).unwrap();
        assert!((out.last_position()[0] - g2[0]).abs() < 1e-3);
    }

    #[test]
    fn temporal_scaling_preserves_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_model(&mut rng, 15, 2, 100.0);
        let a = m.rollout(&m.x0, &m.g, 1.0, 1e-3, 1500, &[]).unwrap();
        let b = m.rollout(&m.x0, &m.g, 2.0, 2e-3, 1500, &[]).unwrap();
        for i in 0..a.len() {
            for d in 0..2 {
                assert!((a.sample(i)[d].x - b.sample(i)[d].x).abs() < 1e-6);
            }
        }
        // Halving dt instead only agrees to discretization accuracy.
        let c = m.rollout(&m.x0, &m.g, 2.0, 5e-4, 4 * 1499 + 1, &[]).unwrap();
        for i in (0..a.len()).step_by(10) {
            for d in 0..2 {
                assert!((a.sample(i)[d].x - c.sample(4 * i)[d].x).abs() < 2e-2 * a.range());
            }
        }
    }

    #[test]
    fn fit_is_idempotent() {
        let demo = min_jerk(0.1, 0.5, 1.0, 1e-3);
        let m1 = fit(&demo, &FitOptions::default()).unwrap();
        let replay = m1.reproduce(1e-3, demo.len()).unwrap();
        let opts = FitOptions { tau: Some(m1.tau), goal: Some(m1.g.clone()), ..Default::default() };
        let m2 = fit(&replay, &opts).unwrap();
        let norm: f64 = m1.weights.iter().flatten().map(|w| w * w).sum::<f64>().sqrt();
        let diff: f64 = m1
            .weights
            .iter()
            .flatten()
            .zip(m2.weights.iter().flatten())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(diff / norm < 1e-6, "relative change {}", diff / norm);
    }

    #[test]
    fn least_squares_is_linear_in_targets() {
        let basis = Basis::exponential(30, 8.0).unwrap();
        let phases: Vec<f64> = (0..400).map(|i| phase_at(8.0, 1.0, i as f64 * 0.0025)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t1: Vec<Vec<f64>> = phases.iter().map(|_| vec![rng.random_range(-5.0..5.0)]).collect();
        let t2: Vec<Vec<f64>> = phases.iter().map(|_| vec![rng.random_range(-5.0..5.0)]).collect();
        let sum: Vec<Vec<f64>> = t1.iter().zip(&t2).map(|(a, b)| vec![a[0] + b[0]]).collect();
        let w1 = fit_forcing_weights(&basis, &phases, &t1).unwrap();
        let w2 = fit_forcing_weights(&basis, &phases, &t2).unwrap();
        let ws = fit_forcing_weights(&basis, &phases, &sum).unwrap();
        let scale = ws.iter().flatten().fold(1.0f64, |m, w| m.max(w.abs()));
        for j in 0..basis.len() {
            assert!((ws[j][0] - w1[j][0] - w2[j][0]).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, 6, 3, 10.0);
        let back = DmpModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        for key in ["alpha", "beta", "tau", "alpha_k", "centers", "widths", "weights", "x0", "g", "dims"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn rollout_reports_divergence_step() {
        let m = DmpModel::unforced(25.0, 1.0, 8.0, 5, vec![0.0], vec![1.0]).unwrap();
        let blowup = |_: &[f64], v: &[f64], _: f64| vec![if v[0] > 0.5 { f64::INFINITY } else { 0.0 }];
        match m.rollout(&[0.0], &[1.0], 1.0, 1e-3, 5000, &[&blowup]) {
            Err(Error::Divergence { step }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn goal_convergence(seed in 0u64..1000, dims in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model(&mut rng, 20, dims, 300.0);
            let traj = m.rollout(&m.x0, &m.g, m.tau, 1e-3, 10_001, &[]).unwrap();
            let last = traj.last_position();
            for d in 0..dims {
                prop_assert!((last[d] - m.g[d]).abs() < 1e-3);
            }
        }

        #[test]
        fn critical_damping_never_overshoots(x0 in -1.0f64..1.0, g in -1.0f64..1.0, alpha in 2.0f64..60.0) {
            let m = DmpModel::unforced(alpha, 1.0, 8.0, 5, vec![x0], vec![g]).unwrap();
            let dt = 0.1 / alpha;
            let traj = m.rollout(&[x0], &[g], 1.0, dt, 2000, &[]).unwrap();
            let sign0 = (g - x0).signum();
            for s in traj.samples() {
                prop_assert!((g - s[0].x) * sign0 >= 0.0);
            }
        }

        #[test]
        fn translation_invariance(seed in 0u64..1000, dx in -2.0f64..2.0, dy in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model(&mut rng, 12, 2, 100.0);
            let a = m.rollout(&m.x0, &m.g, 1.0, 1e-3, 800, &[]).unwrap();
            let x0 = [m.x0[0] + dx, m.x0[1] + dy];
            let g = [m.g[0] + dx, m.g[1] + dy];
            let b = m.rollout(&x0, &g, 1.0, 1e-3, 800, &[]).unwrap();
            for i in 0..a.len() {
                prop_assert!((b.sample(i)[0].x - a.sample(i)[0].x - dx).abs() < 1e-12);
                prop_assert!((b.sample(i)[1].x - a.sample(i)[1].x - dy).abs() < 1e-12);
            }
        }
    }
}
