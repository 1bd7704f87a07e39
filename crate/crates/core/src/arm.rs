//! Planar 3R manipulator: forward kinematics, analytic Jacobian, joint limits
//! and closed-form inverse kinematics.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap, Pose2};

/// Closed interval `[lower, upper]` on one joint quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub const fn symmetric(limit: f64) -> Self {
        Self::new(-limit, limit)
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lower - tol && v <= self.upper + tol
    }
}

/// Position, velocity and acceleration limits of a single joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub position: Bounds,
    pub velocity: Bounds,
    pub acceleration: Bounds,
}

impl JointLimits {
    /// Checks `lower < 0 < upper` for velocity and acceleration, and
    /// `lower <= upper` for position.
    pub fn validate(&self, joint: usize) -> Result<()> {
        for (kind, b) in [
            ("velocity", self.velocity),
            ("acceleration", self.acceleration),
        ] {
            if !(b.lower < 0.0 && b.upper > 0.0) {
                return Err(Error::LimitSign {
                    joint,
                    kind,
                    lower: b.lower,
                    upper: b.upper,
                });
            }
        }
        if !(self.position.lower <= self.position.upper) {
            return Err(Error::InvalidConfig(format!(
                "joint {joint}: position lower limit exceeds upper limit"
            )));
        }
        Ok(())
    }
}

/// Which of the two 2R solutions inverse kinematics should return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElbowBranch {
    /// Elbow angle `q2 >= 0`.
    Down,
    /// Elbow angle `q2 <= 0`.
    Up,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarArm3R {
    pub link_lengths: [f64; 3],
    pub limits: [JointLimits; 3],
}

impl PlanarArm3R {
    /// Arm with the given links, symmetric velocity/acceleration limits and
    /// ±2π position limits.
    pub fn new(link_lengths: [f64; 3], vel_max: [f64; 3], acc_max: [f64; 3]) -> Result<Self> {
        let limits = std::array::from_fn(|j| JointLimits {
            position: Bounds::symmetric(TAU),
            velocity: Bounds::symmetric(vel_max[j]),
            acceleration: Bounds::symmetric(acc_max[j]),
        });
        Self::with_limits(link_lengths, limits)
    }

    pub fn with_limits(link_lengths: [f64; 3], limits: [JointLimits; 3]) -> Result<Self> {
        let arm = Self {
            link_lengths,
            limits,
        };
        arm.validate()?;
        Ok(arm)
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .link_lengths
            .iter()
            .any(|&a| !(a > 0.0 && a.is_finite()))
        {
            return Err(Error::InvalidConfig(
                "link lengths must be positive and finite".into(),
            ));
        }
        for (j, l) in self.limits.iter().enumerate() {
            l.validate(j)?;
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &[f64; 3]) -> Pose2 {
        let [a1, a2, a3] = self.link_lengths;
        let t1 = q[0];
        let t12 = t1 + q[1];
        let t123 = t12 + q[2];
        Pose2::new(
            a1 * t1.cos() + a2 * t12.cos() + a3 * t123.cos(),
            a1 * t1.sin() + a2 * t12.sin() + a3 * t123.sin(),
            t123,
        )
    }

    /// Maps joint rates to `(ẋ, ẏ, φ̇)` in the base frame.
    pub fn jacobian(&self, q: &[f64; 3]) -> Matrix3<f64> {
        let [a1, a2, a3] = self.link_lengths;
        let t1 = q[0];
        let t12 = t1 + q[1];
        let t123 = t12 + q[2];
        let (s1, c1) = t1.sin_cos();
        let (s12, c12) = t12.sin_cos();
        let (s123, c123) = t123.sin_cos();
        let x3 = -a3 * s123;
        let x2 = x3 - a2 * s12;
        let x1 = x2 - a1 * s1;
        let y3 = a3 * c123;
        let y2 = y3 + a2 * c12;
        let y1 = y2 + a1 * c1;
        #[rustfmt::skip]
        let j = Matrix3::new(
            x1,  x2,  x3,
            y1,  y2,  y3,
            1.0, 1.0, 1.0,
        );
        j
    }

    /// Annulus `[|a1 - a2|, a1 + a2]` reachable by the wrist.
    pub fn wrist_annulus(&self) -> (f64, f64) {
        let [a1, a2, _] = self.link_lengths;
        ((a1 - a2).abs(), a1 + a2)
    }

    /// Closed-form inverse kinematics. Joint angles are returned in
    /// `(-π, π]`; callers tracking a path should unwrap them.
    pub fn inverse_kinematics(&self, target: &Pose2, branch: ElbowBranch) -> Result<[f64; 3]> {
        if !(target.x.is_finite() && target.y.is_finite() && target.phi.is_finite()) {
            return Err(Error::NonFinite("ik target"));
        }
        let [a1, a2, a3] = self.link_lengths;
        let (sp, cp) = target.phi.sin_cos();
        let w = Vector2::new(target.x - a3 * cp, target.y - a3 * sp);
        let r = w.norm();
        let (inner, outer) = self.wrist_annulus();
        let slack = 1e-12 * outer;
        if r < inner - slack || r > outer + slack {
            return Err(Error::Unreachable {
                distance: r,
                inner,
                outer,
            });
        }
        let c2 = ((r * r - a1 * a1 - a2 * a2) / (2.0 * a1 * a2)).clamp(-1.0, 1.0);
        let mut q2 = c2.acos();
        if branch == ElbowBranch::Up {
            q2 = -q2;
        }
        let q1 = w.y.atan2(w.x) - (a2 * q2.sin()).atan2(a1 + a2 * q2.cos());
        let q1 = wrap(q1);
        let q3 = wrap(target.phi - q1 - q2);
        Ok([q1, q2, q3])
    }
}

/// Links and limits of the reference 3R experiment arm.
pub fn reference_arm() -> PlanarArm3R {
    PlanarArm3R::new([2.0, 1.5, 1.0], [1.75, 1.57, 1.0], [35.0, 31.4, 20.0])
        .expect("reference arm is valid")
}

#[cfg(test)]
pub(crate) fn vec3(q: &[f64; 3]) -> nalgebra::Vector3<f64> {
    nalgebra::Vector3::new(q[0], q[1], q[2])
}
