//! Desk-scale reference scenes.
//!
//! Geometry is declared, not measured: a 0.5 m planar transfer with a
//! 5 cm obstacle sitting on the straight path, a 0.3 m vertical raise of a
//! box held at ±15 cm, and a 1 m demonstration pair for learning the
//! avoidance style from noisy recordings.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::avoidance::{AvoidanceParams, LearnOptions, Obstacle};
use crate::composition::{AbsoluteSkill, SkillLibrary};
use crate::dmp::{fit, FitOptions};
use crate::error::Result;
use crate::grasp::GraspConfig;
use crate::ingest::{min_jerk_trajectory, DemoSpec, InjectedAvoidance, PreprocessConfig};
use crate::maintenance::{DistanceCouplingSkill, RelativeSkill};
use crate::sim::{Disturbance, Scene, SceneJob};
use crate::trajectory::Trajectory;

pub const OBSTACLE_RADIUS: f64 = 0.05;

/// Avoidance style used by the transfer and raise scenes.
pub fn detour_style() -> AvoidanceParams {
    AvoidanceParams { gamma: 300.0, beta_oa: 3.0 }
}

/// Min-jerk transfer from the origin to (0.5, 0) over 1 s at 1 kHz.
pub fn transfer_demo() -> Result<Trajectory> {
    min_jerk_trajectory(&[0.0, 0.0], &[0.5, 0.0], 1.0, 1e-3)
}

/// Planar transfer with one obstacle 5 mm off the straight path.
///
/// The influence cut-off is disabled so the coupling sees the obstacle
/// for the whole rollout.
pub fn transfer_scene(avoidance: bool) -> Result<(Scene, SkillLibrary)> {
    let model = fit(&transfer_demo()?, &FitOptions::default())?;
    let lib = SkillLibrary::new(vec![AbsoluteSkill { model, avoidance: Some(detour_style()) }], vec![])?;
    let mut scene = Scene::new(
        vec![0.0, 0.0],
        vec![0.5, 0.0],
        GraspConfig::symmetric(Vector3::new(0.0, 0.15, 0.0)),
        1e-3,
        3.0,
    );
    scene.obstacles = vec![Obstacle::new(vec![0.25, 0.005], OBSTACLE_RADIUS)];
    scene.influence_radius = None;
    scene.avoidance = avoidance;
    Ok((scene, lib))
}

/// Options for [`raise_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaiseOptions {
    /// Put an obstacle next to the raise path at mid height.
    pub obstacle: bool,
    /// Run with the distance-based grasp skill weighted in.
    pub grasp_skill: bool,
    /// Squeeze both contacts toward the box for part of the raise.
    pub squeeze: bool,
}

/// Squeeze speed of the raise disturbance (m/s).
pub const SQUEEZE_SPEED: f64 = 0.01;

/// Vertical raise of a box held at ±15 cm along y.
///
/// The grasp skill stays in the library when disabled, with zero weight,
/// so the reported stress is measured against the same setpoint.
pub fn raise_scene(opts: RaiseOptions) -> Result<(Scene, SkillLibrary)> {
    let demo = min_jerk_trajectory(&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.3], 1.0, 1e-3)?;
    let model = fit(&demo, &FitOptions::default())?;
    let grasp = RelativeSkill::Distance(DistanceCouplingSkill::new(Vector3::repeat(20.0), 0.15, 0.15)?);
    let mut lib = SkillLibrary::new(vec![AbsoluteSkill { model, avoidance: Some(detour_style()) }], vec![grasp])?;
    if !opts.grasp_skill {
        lib.weights_rel = vec![0.0];
    }
    let mut scene = Scene::new(
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.3],
        GraspConfig::symmetric(Vector3::new(0.0, 0.15, 0.0)),
        1e-3,
        3.0,
    );
    scene.influence_radius = None;
    if opts.obstacle {
        scene.obstacles = vec![Obstacle::new(vec![0.005, 0.0, 0.15], OBSTACLE_RADIUS)];
    }
    if opts.squeeze {
        scene.disturbance = Some(Disturbance { t_start: 0.3, duration: 1.0, speed: SQUEEZE_SPEED });
    }
    Ok((scene, lib))
}

/// `n` transfer scenes with the obstacle drawn near the straight path.
pub fn random_obstacle_batch(n: usize, seed: u64) -> Result<Vec<SceneJob>> {
    let (base, lib) = transfer_scene(true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let mut scene = base.clone();
            let x = rng.random_range(0.15..0.35);
            let y = rng.random_range(-0.04..0.04);
            scene.obstacles = vec![Obstacle::new(vec![x, y], OBSTACLE_RADIUS)];
            SceneJob { scene, library: lib.clone() }
        })
        .collect())
}

/// A baseline/perturbed demo pair with a known avoidance style.
#[derive(Debug, Clone)]
pub struct StylePair {
    pub baseline: DemoSpec,
    pub perturbed: DemoSpec,
    pub obstacle: Obstacle,
    pub params: AvoidanceParams,
    /// Preprocessing matched to the sample period and noise level.
    pub preprocess: PreprocessConfig,
    pub learn: LearnOptions,
}

/// 1 m transfer over 1 s sampled at 50 Hz, obstacle 1 cm off the path,
/// style γ = 30, β = 1. The two demos draw independent noise.
pub fn style_pair(noise_sigma: f64, seed: u64) -> StylePair {
    let obstacle = Obstacle::new(vec![0.5, 0.01], OBSTACLE_RADIUS);
    let params = AvoidanceParams { gamma: 30.0, beta_oa: 1.0 };
    let mut baseline = DemoSpec::min_jerk(vec![0.0, 0.0], vec![1.0, 0.0], 1.0);
    baseline.dt = 0.02;
    baseline.noise_sigma = noise_sigma;
    baseline.seed = seed;
    let mut perturbed = baseline.clone();
    perturbed.seed = seed.wrapping_add(10_000);
    perturbed.avoidance = Some(InjectedAvoidance { obstacle: obstacle.clone(), params });
    StylePair {
        baseline,
        perturbed,
        obstacle,
        params,
        preprocess: PreprocessConfig { smooth_window: 15, ..Default::default() },
        learn: LearnOptions { min_relative_rate: 0.3, ..Default::default() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{batch_run, run_pick_and_raise, run_scene};

    #[test]
    fn transfer_detours_only_with_avoidance() {
        let (scene, lib) = transfer_scene(true).unwrap();
        let on = run_scene(&scene, &lib).unwrap();
        assert!(on.metrics.min_clearance.unwrap() > OBSTACLE_RADIUS);
        assert!(on.metrics.goal_error < 1e-3);
        assert!(on.metrics.success);
        let (scene, lib) = transfer_scene(false).unwrap();
        let off = run_scene(&scene, &lib).unwrap();
        assert!(off.metrics.collision);
        assert!(!off.metrics.success);
    }

    #[test]
    fn raise_holds_grasp_under_squeeze() {
        for obstacle in [false, true] {
            let (scene, lib) = raise_scene(RaiseOptions { obstacle, grasp_skill: true, squeeze: true }).unwrap();
            let log = run_pick_and_raise(&scene, &lib).unwrap();
            assert!(log.metrics.stress < 1e-3, "obstacle={obstacle}: {:?}", log.metrics);
            assert!(log.metrics.success, "obstacle={obstacle}: {:?}", log.metrics);
            if obstacle {
                assert!(log.metrics.min_clearance.unwrap() > OBSTACLE_RADIUS);
            }
        }
        let (scene, lib) = raise_scene(RaiseOptions { obstacle: false, grasp_skill: false, squeeze: true }).unwrap();
        let log = run_pick_and_raise(&scene, &lib).unwrap();
        assert!(log.metrics.stress > 5e-3);
        assert!(!log.metrics.success);
    }

    #[test]
    fn random_batch_successes_hold_invariants() {
        let jobs = random_obstacle_batch(12, 5).unwrap();
        for (job, log) in jobs.iter().zip(batch_run(&jobs)) {
            let log = log.unwrap();
            assert_eq!(log.metrics, log.recompute_metrics(&job.scene));
            if log.metrics.success {
                assert!(log.metrics.min_clearance.unwrap() > OBSTACLE_RADIUS);
                assert!(log.metrics.goal_error < 1e-3);
            }
        }
    }

    #[test]
    fn style_pair_seeds_differ() {
        let p = style_pair(1e-3, 3);
        assert_ne!(p.baseline.seed, p.perturbed.seed);
        assert!(p.perturbed.avoidance.is_some() && p.baseline.avoidance.is_none());
    }
}
