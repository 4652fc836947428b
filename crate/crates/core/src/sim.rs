//! Kinematic closed-chain rollouts.
//!
//! Each absolute skill integrates its own DMP from the scene start to the
//! scene goal, steering around the scene obstacles when it carries an
//! avoidance style. The object moves with the weighted sum of the skill
//! velocities; both contacts follow the merged commands and, during a
//! disturbance window, an extra squeeze toward the object.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::avoidance::{embed, AvoidanceParams, Obstacle, ObstacleCoupling};
use crate::composition::{check_weights, merge, AbsoluteSkill, CommandPair, SkillLibrary};
use crate::dmp::{Coupling, DmpModel, DmpState};
use crate::error::{Error, Result};
use crate::grasp::{GraspConfig, Side, Twist};
use crate::maintenance::{ContactObservation, RelativeSkill};
use crate::trajectory::{finite_differences, StateTriplet, Trajectory};

pub const DEFAULT_INFLUENCE_RADIUS: f64 = 1.0;

fn default_influence() -> Option<f64> {
    Some(DEFAULT_INFLUENCE_RADIUS)
}

fn default_goal_tolerance() -> f64 {
    1e-3
}

fn yes() -> bool {
    true
}

/// Piecewise-constant weights from `t_start` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub t_start: f64,
    pub w_abs: Vec<f64>,
    pub w_rel: Vec<f64>,
}

/// External squeeze pushing both contacts toward the object at `speed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub t_start: f64,
    pub duration: f64,
    pub speed: f64,
}

impl Disturbance {
    fn active(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_start + self.duration
    }
}

/// A model given inline or as a path relative to the scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    Inline(Box<DmpModel>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteSpec {
    pub model: ModelRef,
    #[serde(default)]
    pub avoidance: Option<AvoidanceParams>,
}

/// Library section of a scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub absolute: Vec<AbsoluteSpec>,
    #[serde(default)]
    pub relative: Vec<RelativeSkill>,
    #[serde(default)]
    pub weights_abs: Option<Vec<f64>>,
    #[serde(default)]
    pub weights_rel: Option<Vec<f64>>,
}

impl LibrarySpec {
    pub fn inline(lib: &SkillLibrary) -> Self {
        Self {
            absolute: lib
                .absolute
                .iter()
                .map(|s| AbsoluteSpec { model: ModelRef::Inline(Box::new(s.model.clone())), avoidance: s.avoidance })
                .collect(),
            relative: lib.relative.clone(),
            weights_abs: Some(lib.weights_abs.clone()),
            weights_rel: Some(lib.weights_rel.clone()),
        }
    }

    pub fn resolve(&self, base_dir: &Path) -> Result<SkillLibrary> {
        let absolute = self
            .absolute
            .iter()
            .map(|s| {
                let model = match &s.model {
                    ModelRef::Inline(m) => {
                        m.validate()?;
                        (**m).clone()
                    }
                    ModelRef::Path(p) => DmpModel::load(base_dir.join(p))?,
                };
                Ok(AbsoluteSkill { model, avoidance: s.avoidance })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut lib = SkillLibrary::new(absolute, self.relative.clone())?;
        if let Some(w) = &self.weights_abs {
            lib.weights_abs = w.clone();
        }
        if let Some(w) = &self.weights_rel {
            lib.weights_rel = w.clone();
        }
        lib.validate()?;
        Ok(lib)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub dims: usize,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub grasp: GraspConfig,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<LibrarySpec>,
    #[serde(default)]
    pub schedule: Vec<WeightEntry>,
    pub dt: f64,
    pub horizon: f64,
    /// Obstacles farther than this are ignored by the coupling; `null`
    /// disables the cut-off.
    #[serde(default = "default_influence")]
    pub influence_radius: Option<f64>,
    /// Master switch for obstacle avoidance.
    #[serde(default = "yes")]
    pub avoidance: bool,
    #[serde(default)]
    pub disturbance: Option<Disturbance>,
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
    /// Grasp deviation above which the rollout fails.
    #[serde(default)]
    pub grasp_tolerance: Option<f64>,
}

impl Scene {
    pub fn new(start: Vec<f64>, goal: Vec<f64>, grasp: GraspConfig, dt: f64, horizon: f64) -> Self {
        Self {
            dims: start.len(),
            start,
            goal,
            grasp,
            obstacles: Vec::new(),
            library: None,
            schedule: Vec::new(),
            dt,
            horizon,
            influence_radius: default_influence(),
            avoidance: true,
            disturbance: None,
            goal_tolerance: default_goal_tolerance(),
            grasp_tolerance: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let scene: Self = serde_json::from_str(s)?;
        scene.validate_geometry()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads a scene file and resolves its embedded library.
    pub fn load(path: impl AsRef<Path>) -> Result<(Scene, SkillLibrary)> {
        let path = path.as_ref();
        let scene = Self::from_json(&std::fs::read_to_string(path)?)?;
        let spec = scene
            .library
            .as_ref()
            .ok_or_else(|| Error::InvalidScene("scene has no library".into()))?;
        let lib = spec.resolve(path.parent().unwrap_or(Path::new(".")))?;
        Ok((scene, lib))
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn validate_geometry(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if !(1..=3).contains(&self.dims) || self.start.len() != self.dims || self.goal.len() != self.dims {
            return bad(format!("start/goal must have dims = {} entries in 1..=3", self.dims));
        }
        if self.start.iter().chain(&self.goal).any(|v| !v.is_finite()) {
            return bad("start and goal must be finite".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("dt and horizon must be positive".into());
        }
        if self.steps() < 1 {
            return bad("horizon shorter than one step".into());
        }
        for o in &self.obstacles {
            o.validate(self.dims).map_err(|e| Error::InvalidScene(e.to_string()))?;
        }
        if let Some(r) = self.influence_radius {
            if !(r > 0.0) {
                return bad("influence radius must be positive".into());
            }
        }
        if let Some(d) = &self.disturbance {
            if !(d.duration >= 0.0 && d.speed.is_finite() && d.t_start.is_finite()) {
                return bad("disturbance needs finite start, speed and non-negative duration".into());
            }
        }
        self.grasp.validate().map_err(|e| Error::InvalidScene(e.to_string()))?;
        Ok(())
    }

    /// Checks the scene against the library it will run with.
    pub fn validate(&self, lib: &SkillLibrary) -> Result<()> {
        self.validate_geometry()?;
        lib.validate().map_err(|e| Error::InvalidScene(e.to_string()))?;
        if lib.absolute.is_empty() {
            return Err(Error::InvalidScene("library has no absolute skill".into()));
        }
        if lib.dims() != Some(self.dims) {
            return Err(Error::InvalidScene(format!(
                "library skills have {:?} DoF, scene has {}",
                lib.dims(),
                self.dims
            )));
        }
        for s in &lib.absolute {
            let bound = 0.1 * s.model.tau / s.model.alpha;
            if self.dt > bound {
                return Err(Error::InvalidScene(format!(
                    "dt = {} exceeds the stability bound 0.1·τ/α = {bound}",
                    self.dt
                )));
            }
        }
        if lib.relative.iter().any(RelativeSkill::needs_force) {
            return Err(Error::InvalidScene("force-based skills need force readings, which the kinematic simulator lacks".into()));
        }
        let mut last = f64::NEG_INFINITY;
        for e in &self.schedule {
            if e.w_abs.len() != lib.absolute.len() || e.w_rel.len() != lib.relative.len() {
                return Err(Error::InvalidScene("schedule entry weight counts differ from the library".into()));
            }
            check_weights(&e.w_abs).and(check_weights(&e.w_rel)).map_err(|e| Error::InvalidScene(e.to_string()))?;
            if !(e.t_start > last) {
                return Err(Error::InvalidScene("schedule entries must have increasing t_start".into()));
            }
            last = e.t_start;
        }
        Ok(())
    }

    fn weights_at<'a>(&'a self, lib: &'a SkillLibrary, t: f64) -> (&'a [f64], &'a [f64]) {
        match self.schedule.iter().rev().find(|e| e.t_start <= t) {
            Some(e) => (&e.w_abs, &e.w_rel),
            None => (&lib.weights_abs, &lib.weights_rel),
        }
    }
}

/// Task metrics of one rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub goal_error: f64,
    /// Smallest distance from the object to an obstacle centre; `None`
    /// without obstacles.
    pub min_clearance: Option<f64>,
    pub collision: bool,
    /// Largest drift of a contact from its grasp offset, `|(p − x_o) − r|`.
    pub max_grasp_deviation: f64,
    /// Largest `|D_r − D_d|` over both contacts.
    pub stress: f64,
    pub success: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutLog {
    pub object: Trajectory,
    pub left: Trajectory,
    pub right: Trajectory,
    pub commands: Vec<CommandPair>,
    /// Measured object-to-contact distances `[left, right]` per step.
    pub distances: Vec<[f64; 2]>,
    /// Desired distances `[left, right]` used for the stress metric.
    pub desired_distances: [f64; 2],
    pub metrics: Metrics,
}

impl RolloutLog {
    pub fn len(&self) -> usize {
        self.object.len()
    }

    pub fn is_empty(&self) -> bool {
        self.object.is_empty()
    }

    /// Recomputes the metrics from the logged series.
    pub fn recompute_metrics(&self, scene: &Scene) -> Metrics {
        compute_metrics(scene, &self.object, &self.left, &self.right, self.desired_distances)
    }

    /// Writes `object.csv`, `left.csv`, `right.csv`, `commands.csv`,
    /// `grasp.csv` and `metrics.json` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.object.save(dir.join("object.csv"))?;
        self.left.save(dir.join("left.csv"))?;
        self.right.save(dir.join("right.csv"))?;
        self.write_commands(std::fs::File::create(dir.join("commands.csv"))?)?;
        self.write_grasp(std::fs::File::create(dir.join("grasp.csv"))?)?;
        std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&self.metrics)? + "\n")?;
        Ok(())
    }

    pub fn write_commands<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        for side in ["left", "right"] {
            for c in ["vx", "vy", "vz", "wx", "wy", "wz"] {
                header.push(format!("{side}_{c}"));
            }
        }
        wtr.write_record(&header)?;
        for (i, c) in self.commands.iter().enumerate() {
            let mut row = vec![self.object.time(i).to_string()];
            for t in [c.v_left, c.v_right] {
                row.extend(t.to_vector().iter().map(f64::to_string));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Per-step grasp distances and their deviation from the setpoint.
    pub fn write_grasp<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "d_left", "d_right", "dev_left", "dev_right"])?;
        let [dl, dr] = self.desired_distances;
        for (i, [l, r]) in self.distances.iter().enumerate() {
            wtr.write_record(&[
                self.object.time(i).to_string(),
                l.to_string(),
                r.to_string(),
                (l - dl).to_string(),
                (r - dr).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn desired_distances(scene: &Scene, lib: &SkillLibrary) -> [f64; 2] {
    lib.relative
        .iter()
        .find_map(|s| match s {
            RelativeSkill::Distance(d) => Some([d.d_desired_left, d.d_desired_right]),
            RelativeSkill::Force(_) => None,
        })
        .unwrap_or([scene.grasp.r_left.norm(), scene.grasp.r_right.norm()])
}

fn compute_metrics(scene: &Scene, object: &Trajectory, left: &Trajectory, right: &Trajectory, desired: [f64; 2]) -> Metrics {
    let end = object.last_position();
    let goal_error = end.iter().zip(&scene.goal).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let mut min_clearance: Option<f64> = None;
    let mut collision = false;
    let mut max_dev = 0.0f64;
    let mut stress = 0.0f64;
    for i in 0..object.len() {
        let x = object.position(i);
        for o in &scene.obstacles {
            let d = o.distance(&x);
            min_clearance = Some(min_clearance.map_or(d, |m| m.min(d)));
            collision |= d < o.radius;
        }
        let xo = embed(&x);
        for (k, (traj, side)) in [(left, Side::Left), (right, Side::Right)].into_iter().enumerate() {
            let off = embed(&traj.position(i)) - xo;
            max_dev = max_dev.max((off - scene.grasp.offset(side)).norm());
            stress = stress.max((off.norm() - desired[k]).abs());
        }
    }
    let success = goal_error < scene.goal_tolerance
        && !collision
        && goal_error.is_finite()
        && scene.grasp_tolerance.map_or(true, |tol| max_dev < tol);
    Metrics {
        goal_error,
        min_clearance,
        collision,
        max_grasp_deviation: max_dev,
        stress,
        success,
        steps: object.len() - 1,
    }
}

fn coupling_for(scene: &Scene, skill: &AbsoluteSkill) -> Option<ObstacleCoupling> {
    let params = skill.avoidance?;
    if !scene.avoidance || scene.obstacles.is_empty() {
        return None;
    }
    Some(ObstacleCoupling {
        obstacles: scene.obstacles.clone(),
        params,
        influence_radius: scene.influence_radius,
    })
}

/// Rolls the scene out with `lib`. Collisions are recorded in the metrics;
/// non-finite states abort with the step index.
pub fn run_scene(scene: &Scene, lib: &SkillLibrary) -> Result<RolloutLog> {
    scene.validate(lib)?;
    let n_steps = scene.steps();
    let dt = scene.dt;
    let dims = scene.dims;

    let couplings: Vec<Option<ObstacleCoupling>> = lib.absolute.iter().map(|s| coupling_for(scene, s)).collect();
    let mut states = lib
        .absolute
        .iter()
        .map(|s| DmpState::new(&s.model, &scene.start, &scene.goal, s.model.tau, dt))
        .collect::<Result<Vec<_>>>()?;

    let mut x_o = scene.start.clone();
    let mut contacts = [embed(&x_o) + scene.grasp.r_left, embed(&x_o) + scene.grasp.r_right];

    let mut object = Vec::with_capacity(n_steps + 1);
    let mut contact_pos: [Vec<Vector3<f64>>; 2] = [Vec::with_capacity(n_steps + 1), Vec::with_capacity(n_steps + 1)];
    let mut contact_vel: [Vec<Vector3<f64>>; 2] = [Vec::with_capacity(n_steps + 1), Vec::with_capacity(n_steps + 1)];
    let mut commands = Vec::with_capacity(n_steps + 1);
    let mut distances = Vec::with_capacity(n_steps + 1);

    for n in 0..=n_steps {
        let t = n as f64 * dt;
        let (w_abs, w_rel) = scene.weights_at(lib, t);

        let mut accs = Vec::with_capacity(states.len());
        for (state, c) in states.iter().zip(&couplings) {
            let cs: Vec<&dyn Coupling> = c.iter().map(|c| c as &dyn Coupling).collect();
            accs.push(state.acceleration(&cs)?);
        }
        let mut v_o = vec![0.0; dims];
        let mut a_o = vec![0.0; dims];
        for ((state, a), w) in states.iter().zip(&accs).zip(w_abs) {
            for d in 0..dims {
                v_o[d] += w * state.v[d];
                a_o[d] += w * a[d];
            }
        }

        let xo3 = embed(&x_o);
        let offsets = [contacts[0] - xo3, contacts[1] - xo3];
        let rel: Vec<(Twist, Twist)> = lib
            .relative
            .iter()
            .map(|s| {
                let obs = |k: usize| ContactObservation { offset: offsets[k], force: None };
                (s.correction(Side::Left, &obs(0)), s.correction(Side::Right, &obs(1)))
            })
            .collect();
        let abs: Vec<Twist> = states.iter().map(|s| Twist::translation(&s.v)).collect();
        let cmd = merge(&scene.grasp, &abs, w_abs, &rel, w_rel)?;

        let squeeze = |k: usize| -> Vector3<f64> {
            match &scene.disturbance {
                Some(d) if d.active(t) && offsets[k].norm() > 0.0 => -offsets[k].normalize() * d.speed,
                _ => Vector3::zeros(),
            }
        };
        let vel = [cmd.v_left.linear + squeeze(0), cmd.v_right.linear + squeeze(1)];

        object.push(
            (0..dims)
                .map(|d| StateTriplet::new(x_o[d], v_o[d], a_o[d]))
                .collect::<Vec<_>>(),
        );
        for k in 0..2 {
            contact_pos[k].push(contacts[k]);
            contact_vel[k].push(vel[k]);
        }
        distances.push([offsets[0].norm(), offsets[1].norm()]);
        commands.push(cmd);

        if n == n_steps {
            break;
        }
        for d in 0..dims {
            x_o[d] += dt * v_o[d];
        }
        for k in 0..2 {
            contacts[k] += dt * vel[k];
        }
        for (state, a) in states.iter_mut().zip(&accs) {
            state.advance(a)?;
        }
        if x_o.iter().any(|v| !v.is_finite()) || contacts.iter().any(|c| !c.iter().all(|v| v.is_finite())) {
            return Err(Error::Divergence { step: n + 1 });
        }
    }

    let object = Trajectory::new(dt, object)?;
    let [left, right] = [0, 1].map(|k| contact_trajectory(dt, &contact_pos[k], &contact_vel[k]));
    let (left, right) = (left?, right?);
    let desired = desired_distances(scene, lib);
    let metrics = compute_metrics(scene, &object, &left, &right, desired);
    Ok(RolloutLog { object, left, right, commands, distances, desired_distances: desired, metrics })
}

fn contact_trajectory(dt: f64, pos: &[Vector3<f64>], vel: &[Vector3<f64>]) -> Result<Trajectory> {
    let acc: Vec<Vec<f64>> = (0..3)
        .map(|d| finite_differences(&vel.iter().map(|v| v[d]).collect::<Vec<_>>(), dt).0)
        .collect();
    let samples = (0..pos.len())
        .map(|i| (0..3).map(|d| StateTriplet::new(pos[i][d], vel[i][d], acc[d][i])).collect())
        .collect();
    Trajectory::new(dt, samples)
}

/// Default grasp tolerance of the pick-and-raise task (m).
pub const RAISE_GRASP_TOLERANCE: f64 = 1e-3;

/// Pick-and-raise: a 3D scene whose library carries a distance-based grasp
/// skill. Success additionally requires the grasp deviation to stay below
/// the scene tolerance (1 mm when unset).
pub fn run_pick_and_raise(scene: &Scene, lib: &SkillLibrary) -> Result<RolloutLog> {
    if scene.dims != 3 {
        return Err(Error::InvalidScene("pick-and-raise runs in 3D".into()));
    }
    if !lib.relative.iter().any(|s| matches!(s, RelativeSkill::Distance(_))) {
        return Err(Error::InvalidScene("pick-and-raise needs a distance-based grasp skill".into()));
    }
    let mut scene = scene.clone();
    scene.grasp_tolerance.get_or_insert(RAISE_GRASP_TOLERANCE);
    run_scene(&scene, lib)
}

/// One independent batch entry.
#[derive(Debug, Clone)]
pub struct SceneJob {
    pub scene: Scene,
    pub library: SkillLibrary,
}

/// Runs every job in parallel; results keep the input order and each
/// job's error stays with its entry.
pub fn batch_run(jobs: &[SceneJob]) -> Vec<Result<RolloutLog>> {
    jobs.par_iter().map(|j| run_scene(&j.scene, &j.library)).collect()
}
