//! Relative skills that keep both hands coupled to the held object.
//!
//! Corrections are contact velocities in the object frame. The simulated
//! object never rotates, so that frame shares the workspace axes.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grasp::{Side, Twist};

/// Contact-velocity correction `K (F_d − F_r)` from a force error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceCouplingSkill {
    /// Diagonal of K, (m/s)/N.
    pub gain: Vector3<f64>,
    pub f_desired: Vector3<f64>,
}

impl ForceCouplingSkill {
    pub fn new(gain: Vector3<f64>, f_desired: Vector3<f64>) -> Result<Self> {
        let s = Self { gain, f_desired };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_gain(&self.gain)?;
        if !self.f_desired.iter().all(|f| f.is_finite()) {
            return Err(invalid("desired force must be finite"));
        }
        Ok(())
    }

    pub fn force_correction(&self, f_measured: &Vector3<f64>) -> Vector3<f64> {
        self.gain.component_mul(&(self.f_desired - f_measured))
    }
}

/// Contact-velocity correction `K (D_d − D_r)` along the object-to-contact
/// axis. A positive error means the contact is too close and is pushed out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceCouplingSkill {
    /// Diagonal of K, 1/s.
    pub gain: Vector3<f64>,
    pub d_desired_left: f64,
    pub d_desired_right: f64,
}

impl DistanceCouplingSkill {
    pub fn new(gain: Vector3<f64>, d_desired_left: f64, d_desired_right: f64) -> Result<Self> {
        let s = Self { gain, d_desired_left, d_desired_right };
        s.validate()?;
        Ok(s)
    }

    /// Same setpoint on both sides with the default unit gain.
    pub fn symmetric(d_desired: f64) -> Result<Self> {
        Self::new(Vector3::repeat(1.0), d_desired, d_desired)
    }

    pub fn validate(&self) -> Result<()> {
        check_gain(&self.gain)?;
        if !(self.d_desired_left >= 0.0 && self.d_desired_left.is_finite())
            || !(self.d_desired_right >= 0.0 && self.d_desired_right.is_finite())
        {
            return Err(invalid("desired distances must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn desired(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.d_desired_left,
            Side::Right => self.d_desired_right,
        }
    }

    /// `axis` is the object-to-contact direction; it is normalized here and
    /// a zero axis yields no correction.
    pub fn distance_correction(&self, side: Side, d_measured: f64, axis: &Vector3<f64>) -> Vector3<f64> {
        let n = axis.norm();
        if n == 0.0 || !n.is_finite() {
            return Vector3::zeros();
        }
        let err = self.desired(side) - d_measured;
        self.gain.component_mul(&(axis * (err / n)))
    }
}

fn check_gain(g: &Vector3<f64>) -> Result<()> {
    if g.iter().all(|k| *k >= 0.0 && k.is_finite()) {
        Ok(())
    } else {
        Err(invalid("gain entries must be finite and non-negative"))
    }
}

/// What a relative skill observes about one contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactObservation {
    /// Contact position minus object position.
    pub offset: Vector3<f64>,
    pub force: Option<Vector3<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkillSpec", into = "SkillSpec")]
pub enum RelativeSkill {
    Distance(DistanceCouplingSkill),
    Force(ForceCouplingSkill),
}

impl RelativeSkill {
    /// Correction twist for one contact. A force skill without a force
    /// reading contributes nothing.
    pub fn correction(&self, side: Side, obs: &ContactObservation) -> Twist {
        let linear = match self {
            RelativeSkill::Distance(s) => s.distance_correction(side, obs.offset.norm(), &obs.offset),
            RelativeSkill::Force(s) => obs.force.map(|f| s.force_correction(&f)).unwrap_or_else(Vector3::zeros),
        };
        Twist::new(linear, Vector3::zeros())
    }

    pub fn needs_force(&self) -> bool {
        matches!(self, RelativeSkill::Force(_))
    }
}

/// Wire form: `{type: "distance"|"force", gain: [..], setpoint: [..]}`.
///
/// `gain` has 1 (isotropic) or 3 entries. A distance setpoint is
/// `[d]` or `[d_left, d_right]`; a force setpoint is `[fx, fy, fz]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SkillSpec {
    #[serde(rename = "type")]
    kind: SkillKind,
    #[serde(default)]
    gain: Vec<f64>,
    setpoint: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SkillKind {
    Distance,
    Force,
}

impl TryFrom<SkillSpec> for RelativeSkill {
    type Error = crate::error::Error;

    fn try_from(s: SkillSpec) -> Result<Self> {
        let gain = match s.gain.as_slice() {
            [] => Vector3::repeat(1.0),
            [k] => Vector3::repeat(*k),
            [a, b, c] => Vector3::new(*a, *b, *c),
            g => return Err(invalid(format!("gain needs 1 or 3 entries, got {}", g.len()))),
        };
        match (s.kind, s.setpoint.as_slice()) {
            (SkillKind::Distance, [d]) => Ok(Self::Distance(DistanceCouplingSkill::new(gain, *d, *d)?)),
            (SkillKind::Distance, [l, r]) => Ok(Self::Distance(DistanceCouplingSkill::new(gain, *l, *r)?)),
            (SkillKind::Force, [x, y, z]) => Ok(Self::Force(ForceCouplingSkill::new(gain, Vector3::new(*x, *y, *z))?)),
            (kind, sp) => Err(invalid(format!("{kind:?} skill cannot take a {}-entry setpoint", sp.len()))),
        }
    }
}

impl From<RelativeSkill> for SkillSpec {
    fn from(s: RelativeSkill) -> Self {
        match s {
            RelativeSkill::Distance(d) => SkillSpec {
                kind: SkillKind::Distance,
                gain: d.gain.iter().copied().collect(),
                setpoint: vec![d.d_desired_left, d.d_desired_right],
            },
            RelativeSkill::Force(f) => SkillSpec {
                kind: SkillKind::Force,
                gain: f.gain.iter().copied().collect(),
                setpoint: f.f_desired.iter().copied().collect(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn force_examples() {
        let s = ForceCouplingSkill::new(Vector3::repeat(0.01), Vector3::new(5.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.force_correction(&Vector3::new(5.0, 0.0, 0.0)), Vector3::zeros());
        let c = s.force_correction(&Vector3::new(3.0, 0.0, 0.0));
        assert!((c - Vector3::new(0.02, 0.0, 0.0)).amax() < 1e-15);
        let c2 = s.force_correction(&Vector3::new(1.0, 0.0, 0.0));
        assert!((c2 - 2.0 * c).amax() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let s = DistanceCouplingSkill::new(Vector3::repeat(2.0), 0.15, 0.15).unwrap();
        let axis = Vector3::new(0.0, 0.14, 0.0);
        assert_eq!(s.distance_correction(Side::Left, 0.15, &axis), Vector3::zeros());
        let c = s.distance_correction(Side::Left, 0.14, &axis);
        assert!((c - Vector3::new(0.0, 0.02, 0.0)).amax() < 1e-15);
        // too far: pulled back in
        assert!(s.distance_correction(Side::Left, 0.16, &axis).y < 0.0);
    }

    #[test]
    fn negative_gain_rejected() {
        assert!(DistanceCouplingSkill::new(Vector3::new(1.0, -1.0, 1.0), 0.1, 0.1).is_err());
        assert!(ForceCouplingSkill::new(Vector3::repeat(f64::NAN), Vector3::zeros()).is_err());
    }

    #[test]
    fn symmetric_skill_on_symmetric_grasp_is_balanced() {
        let s = RelativeSkill::Distance(DistanceCouplingSkill::new(Vector3::repeat(3.0), 0.15, 0.15).unwrap());
        let r = Vector3::new(0.02, 0.13, -0.01);
        let l = s.correction(Side::Left, &ContactObservation { offset: r, force: None });
        let rr = s.correction(Side::Right, &ContactObservation { offset: -r, force: None });
        assert!((l.linear + rr.linear).amax() < 1e-15);
        assert!(l.linear.norm() > 0.0);
    }

    #[test]
    fn closed_loop_contraction_is_monotone() {
        let k = 5.0;
        let dt = 1e-3;
        let s = DistanceCouplingSkill::new(Vector3::repeat(k), 0.15, 0.15).unwrap();
        let mut p: Vector3<f64> = Vector3::new(0.0, 0.145, 0.0);
        let mut last: f64 = (p.norm() - 0.15).abs();
        let mut t = 0.0;
        let mut settled = None;
        while t < 3.0 / k {
            p += dt * s.distance_correction(Side::Left, p.norm(), &p);
            t += dt;
            let e = (p.norm() - 0.15).abs();
            assert!(e < last);
            last = e;
            if settled.is_none() && e < 0.01 * 0.15 {
                settled = Some(t);
            }
        }
        // first-order response: 5 mm decays below 1.5 mm after ln(5/1.5)/K
        let oracle = (0.005f64 / 0.0015).ln() / k;
        assert!((settled.unwrap() - oracle).abs() < 2.0 * dt);
    }

    #[test]
    fn force_skill_without_reading_is_inert() {
        let s = RelativeSkill::Force(ForceCouplingSkill::new(Vector3::repeat(1.0), Vector3::x()).unwrap());
        let c = s.correction(Side::Right, &ContactObservation { offset: Vector3::x(), force: None });
        assert_eq!(c, Twist::zero());
    }

    #[test]
    fn json_round_trip() {
        let s: RelativeSkill = serde_json::from_str(r#"{"type":"distance","gain":[20],"setpoint":[0.15]}"#).unwrap();
        match s {
            RelativeSkill::Distance(d) => {
                assert_eq!(d.gain, Vector3::repeat(20.0));
                assert_eq!((d.d_desired_left, d.d_desired_right), (0.15, 0.15));
            }
            _ => panic!("wrong kind"),
        }
        let back: RelativeSkill = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let f: RelativeSkill = serde_json::from_str(r#"{"type":"force","gain":[0.1,0.1,0.2],"setpoint":[5,0,0]}"#).unwrap();
        assert!(f.needs_force());
        assert!(serde_json::from_str::<RelativeSkill>(r#"{"type":"force","setpoint":[5]}"#).is_err());
        assert!(serde_json::from_str::<RelativeSkill>(r#"{"type":"twist","setpoint":[5]}"#).is_err());
    }

    proptest! {
        #[test]
        fn corrections_are_linear(
            k in prop::array::uniform3(0.0f64..10.0),
            fd in prop::array::uniform3(-10.0f64..10.0),
            f1 in prop::array::uniform3(-10.0f64..10.0),
            f2 in prop::array::uniform3(-10.0f64..10.0),
            d1 in -0.1f64..0.1,
            d2 in -0.1f64..0.1,
            axis in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let k = Vector3::from(k);
            let fs = ForceCouplingSkill::new(k, Vector3::from(fd)).unwrap();
            let fd = Vector3::from(fd);
            let (f1, f2) = (Vector3::from(f1), Vector3::from(f2));
            // error e1 + e2 against the sum of separate corrections
            let both = fs.force_correction(&(f1 + f2 - fd));
            let sep = fs.force_correction(&f1) + fs.force_correction(&f2);
            prop_assert!((both - sep).amax() <= 1e-12);

            let ds = DistanceCouplingSkill::new(k, 0.0, 0.0).unwrap();
            let axis = Vector3::from(axis);
            let both = ds.distance_correction(Side::Left, d1 + d2, &axis);
            let sep = ds.distance_correction(Side::Left, d1, &axis) + ds.distance_correction(Side::Left, d2, &axis);
            prop_assert!((both - sep).amax() <= 1e-12);
        }
    }
}
