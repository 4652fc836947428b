//! Velocity-level merging of absolute and relative skills.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::avoidance::AvoidanceParams;
use crate::dmp::DmpModel;
use crate::error::{invalid, Result};
use crate::grasp::{GraspConfig, Twist};
use crate::maintenance::RelativeSkill;

/// End-effector velocity commands.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CommandPair {
    pub v_left: Twist,
    pub v_right: Twist,
}

impl CommandPair {
    pub fn is_finite(&self) -> bool {
        self.v_left.is_finite() && self.v_right.is_finite()
    }
}

/// `[ẋ_L; ẋ_R] = Gᵀ Σ_j w_j ẋ_oj + Σ_k w_k [ẋ_CL,k; ẋ_CR,k]`.
pub fn merge(
    grasp: &GraspConfig,
    abs_velocities: &[Twist],
    w_abs: &[f64],
    rel_velocities: &[(Twist, Twist)],
    w_rel: &[f64],
) -> Result<CommandPair> {
    if abs_velocities.len() != w_abs.len() {
        return Err(invalid(format!(
            "{} absolute velocities but {} weights",
            abs_velocities.len(),
            w_abs.len()
        )));
    }
    if rel_velocities.len() != w_rel.len() {
        return Err(invalid(format!(
            "{} relative velocities but {} weights",
            rel_velocities.len(),
            w_rel.len()
        )));
    }
    check_weights(w_abs)?;
    check_weights(w_rel)?;

    let object = abs_velocities
        .iter()
        .zip(w_abs)
        .fold(Twist::zero(), |acc, (t, w)| acc + t.scaled(*w));
    let mut stacked: SVector<f64, 12> = grasp.global_map().transpose() * object.to_vector();
    for ((l, r), w) in rel_velocities.iter().zip(w_rel) {
        stacked.fixed_rows_mut::<6>(0).axpy(*w, &l.to_vector(), 1.0);
        stacked.fixed_rows_mut::<6>(6).axpy(*w, &r.to_vector(), 1.0);
    }
    Ok(CommandPair {
        v_left: Twist::from_vector(&stacked.fixed_rows::<6>(0).into_owned()),
        v_right: Twist::from_vector(&stacked.fixed_rows::<6>(6).into_owned()),
    })
}

pub(crate) fn check_weights(w: &[f64]) -> Result<()> {
    if w.iter().all(|w| *w >= 0.0 && w.is_finite()) {
        Ok(())
    } else {
        Err(invalid("skill weights must be finite and non-negative"))
    }
}

/// An object-frame motion primitive with its optional avoidance style.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteSkill {
    pub model: DmpModel,
    #[serde(default)]
    pub avoidance: Option<AvoidanceParams>,
}

/// Skills available to a rollout and their default weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillLibrary {
    pub absolute: Vec<AbsoluteSkill>,
    #[serde(default)]
    pub relative: Vec<RelativeSkill>,
    pub weights_abs: Vec<f64>,
    pub weights_rel: Vec<f64>,
}

impl SkillLibrary {
    /// Library with unit weights on every skill.
    pub fn new(absolute: Vec<AbsoluteSkill>, relative: Vec<RelativeSkill>) -> Result<Self> {
        let lib = Self {
            weights_abs: vec![1.0; absolute.len()],
            weights_rel: vec![1.0; relative.len()],
            absolute,
            relative,
        };
        lib.validate()?;
        Ok(lib)
    }

    pub fn validate(&self) -> Result<()> {
        if self.absolute.len() != self.weights_abs.len() || self.relative.len() != self.weights_rel.len() {
            return Err(invalid("skill and weight counts differ"));
        }
        check_weights(&self.weights_abs)?;
        check_weights(&self.weights_rel)?;
        for s in &self.absolute {
            s.model.validate()?;
            if let Some(p) = &s.avoidance {
                p.validate()?;
            }
        }
        if let Some(first) = self.absolute.first() {
            if self.absolute.iter().any(|s| s.model.dims != first.model.dims) {
                return Err(invalid("absolute skills differ in dimension"));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> Option<usize> {
        self.absolute.first().map(|s| s.model.dims)
    }
}
