//! Grasp matrices for a two-handed rigid grasp.
//!
//! Twists are stacked `(linear; angular)`. The grasp matrix of a contact at
//! offset `r` from the object frame is `G = [I 0; S(r) I]` and the contact
//! twist is `Gᵀ ẋ_o`.

use nalgebra::{Matrix3, Matrix6, SMatrix, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Pure translation from a workspace velocity of up to 3 entries.
    pub fn translation(v: &[f64]) -> Self {
        Self { linear: crate::avoidance::embed(v), angular: Vector3::zeros() }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            linear: v.fixed_rows::<3>(0).into_owned(),
            angular: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { linear: self.linear * s, angular: self.angular * s }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;
    fn add(self, o: Twist) -> Twist {
        Twist { linear: self.linear + o.linear, angular: self.angular + o.angular }
    }
}

impl std::ops::AddAssign for Twist {
    fn add_assign(&mut self, o: Twist) {
        self.linear += o.linear;
        self.angular += o.angular;
    }
}

/// `S(r)` with `S(r) u = r × u`.
pub fn skew(r: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -r.z, r.y, r.z, 0.0, -r.x, -r.y, r.x, 0.0)
}

pub fn grasp_matrix(r: &Vector3<f64>) -> Matrix6<f64> {
    let mut g = Matrix6::identity();
    g.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew(r));
    g
}

/// Contact offsets from the object frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspConfig {
    pub r_left: Vector3<f64>,
    pub r_right: Vector3<f64>,
    /// When set, `validate` also requires `r_left ≈ −r_right`.
    #[serde(default)]
    pub symmetric: bool,
}

impl GraspConfig {
    pub fn new(r_left: Vector3<f64>, r_right: Vector3<f64>) -> Self {
        Self { r_left, r_right, symmetric: false }
    }

    /// Side grasp with contacts at `±r`.
    pub fn symmetric(r_left: Vector3<f64>) -> Self {
        Self { r_left, r_right: -r_left, symmetric: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.r_left.iter().chain(self.r_right.iter()).all(|v| v.is_finite()) {
            return Err(invalid("grasp offsets must be finite"));
        }
        if self.symmetric {
            let scale = self.r_left.norm().max(self.r_right.norm()).max(1e-12);
            if (self.r_left + self.r_right).norm() > 1e-9 * scale {
                return Err(invalid("symmetric grasp requires r_left = -r_right"));
            }
        }
        Ok(())
    }

    pub fn offset(&self, side: Side) -> Vector3<f64> {
        match side {
            Side::Left => self.r_left,
            Side::Right => self.r_right,
        }
    }

    pub fn matrix(&self, side: Side) -> Matrix6<f64> {
        grasp_matrix(&self.offset(side))
    }

    /// `Gᵢᵀ ẋ_o`, i.e. `(v + ω × r; ω)`.
    pub fn contact_twist(&self, side: Side, object: &Twist) -> Twist {
        Twist::from_vector(&(self.matrix(side).transpose() * object.to_vector()))
    }

    /// `[G_L G_R]`, 6×12.
    pub fn global_map(&self) -> SMatrix<f64, 6, 12> {
        let mut g = SMatrix::<f64, 6, 12>::zeros();
        g.fixed_view_mut::<6, 6>(0, 0).copy_from(&self.matrix(Side::Left));
        g.fixed_view_mut::<6, 6>(0, 6).copy_from(&self.matrix(Side::Right));
        g
    }
}
