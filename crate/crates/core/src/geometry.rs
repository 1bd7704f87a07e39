//! Planar rigid-body transforms and the twist-transfer matrices used to
//! assemble the relative Jacobian.
//!
//! Twists are ordered `(vx, vy, ω)`. In the plane the lever-arm operator that
//! couples angular rate into linear velocity reduces to the column
//! `(-ry, rx)`, and the frame rotation acts on `(vx, vy)` only.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`, rejecting non-finite input.
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(a))
}

/// Infallible variant of [`wrap_angle`]; NaN propagates.
#[inline]
pub(crate) fn wrap(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Planar pose `(x, y, φ)` with φ kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self {
            x,
            y,
            phi: wrap(phi),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn to_transform(self) -> Transform2 {
        Transform2::new(self.phi, Vector2::new(self.x, self.y))
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.phi)
    }
}

impl From<Transform2> for Pose2 {
    fn from(t: Transform2) -> Self {
        Pose2::new(t.translation.x, t.translation.y, t.rotation)
    }
}

/// Rigid transform of the plane: rotate by `rotation`, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform2 {
    pub rotation: f64,
    pub translation: Vector2<f64>,
}

impl Default for Transform2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform2 {
    pub fn new(rotation: f64, translation: Vector2<f64>) -> Self {
        Self {
            rotation: wrap(rotation),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, Vector2::zeros())
    }

    pub fn from_translation(x: f64, y: f64) -> Self {
        Self::new(0.0, Vector2::new(x, y))
    }

    pub fn rotation_matrix(&self) -> Rotation2<f64> {
        Rotation2::new(self.rotation)
    }

    pub fn transform_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.rotation_matrix() * p + self.translation
    }
}

/// `a ∘ b`: applies `b` first, then `a`.
pub fn compose(a: &Transform2, b: &Transform2) -> Transform2 {
    Transform2::new(
        a.rotation + b.rotation,
        a.translation + a.rotation_matrix() * b.translation,
    )
}

pub fn invert(t: &Transform2) -> Transform2 {
    let rt = t.rotation_matrix().inverse();
    Transform2::new(-t.rotation, -(rt * t.translation))
}

impl std::ops::Mul for Transform2 {
    type Output = Transform2;

    fn mul(self, rhs: Transform2) -> Transform2 {
        compose(&self, &rhs)
    }
}

/// Planar twist-transfer pair built from one relative transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistTransfer {
    /// Identity plus the lever-arm column coupling ω into `(vx, vy)`.
    pub psi: Matrix3<f64>,
    /// Block-diagonal rotation: 2×2 on `(vx, vy)`, 1 on ω.
    pub omega: Matrix3<f64>,
}

pub fn twist_transfer(relative_pose: &Transform2) -> TwistTransfer {
    let r = relative_pose.translation;
    let (s, c) = relative_pose.rotation.sin_cos();
    #[rustfmt::skip]
    let psi = Matrix3::new(
        1.0, 0.0, -r.y,
        0.0, 1.0,  r.x,
        0.0, 0.0,  1.0,
    );
    #[rustfmt::skip]
    let omega = Matrix3::new(
        c,  -s,  0.0,
        s,   c,  0.0,
        0.0, 0.0, 1.0,
    );
    TwistTransfer { psi, omega }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn close(a: &Transform2, b: &Transform2, tol: f64) -> bool {
        wrap(a.rotation - b.rotation).abs() < tol && (a.translation - b.translation).norm() < tol
    }

    #[test]
    fn wrap_angle_cases() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI).unwrap(), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-3.5 * PI).unwrap(), 0.5 * PI, epsilon = 1e-12);
        assert_eq!(wrap_angle(-PI).unwrap(), PI);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn compose_identity_and_quarter_turn() {
        let t = Transform2::new(0.3, Vector2::new(1.0, -2.0));
        assert_eq!(compose(&Transform2::identity(), &t), t);

        let a = Transform2::new(FRAC_PI_2, Vector2::new(1.0, 0.0));
        let b = Transform2::from_translation(1.0, 0.0);
        let ab = compose(&a, &b);
        assert_abs_diff_eq!(ab.rotation, FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(ab.translation.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ab.translation.y, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn invert_cases() {
        assert!(close(
            &invert(&Transform2::identity()),
            &Transform2::identity(),
            1e-15
        ));
        let t = invert(&Transform2::from_translation(4.0, 0.0));
        assert_eq!(t.rotation, 0.0);
        assert_eq!(t.translation, Vector2::new(-4.0, 0.0));
    }

    #[test]
    fn twist_transfer_identity_and_rotation() {
        let tt = twist_transfer(&Transform2::identity());
        assert_eq!(tt.psi, Matrix3::identity());
        assert_eq!(tt.omega, Matrix3::identity());

        let tt = twist_transfer(&Transform2::new(FRAC_PI_2, Vector2::zeros()));
        assert_eq!(tt.psi, Matrix3::identity());
        let v = tt.omega * Vector3::new(1.0, 0.0, 0.7);
        assert_abs_diff_eq!(v, Vector3::new(0.0, 1.0, 0.7), epsilon = 1e-15);
    }

    fn transform() -> impl Strategy<Value = Transform2> {
        (-10.0..10.0f64, -5.0..5.0f64, -5.0..5.0f64)
            .prop_map(|(r, x, y)| Transform2::new(r, Vector2::new(x, y)))
    }

    proptest! {
        #[test]
        fn group_laws(a in transform(), b in transform(), c in transform()) {
            let e = Transform2::identity();
            prop_assert!(close(&compose(&a, &invert(&a)), &e, 1e-12));
            prop_assert!(close(&compose(&invert(&a), &a), &e, 1e-12));
            prop_assert!(close(&compose(&compose(&a, &invert(&a)), &b), &b, 1e-12));
            let left = compose(&compose(&a, &b), &c);
            let right = compose(&a, &compose(&b, &c));
            prop_assert!(close(&left, &right, 1e-12));
        }

        #[test]
        fn wrap_is_idempotent_and_in_range(a in -1e3..1e3f64) {
            let w = wrap_angle(a).unwrap();
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_angle(w).unwrap(), w);
            let k = ((a - w) / TAU).round();
            prop_assert!((a - w - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn omega_is_orthogonal(t in transform()) {
            let o = twist_transfer(&t).omega;
            prop_assert!((o.transpose() * o - Matrix3::identity()).abs().max() < 1e-12);
        }
    }
}
