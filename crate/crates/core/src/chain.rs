//! Both arms coupled into one kinematic chain running from robot B's tool
//! frame, down through its base, across to robot A's base and up to robot A's
//! tool frame.
//!
//! All poses and rates produced here are expressed in robot B's tool frame,
//! so a path attached to the part held by B never has to be re-expressed
//! when the joints move.

use nalgebra::{Matrix3, SMatrix};
use serde::{Deserialize, Serialize};

use crate::arm::{JointLimits, PlanarArm3R};
use crate::geometry::{compose, invert, twist_transfer, Pose2, Transform2};

/// Number of joints of the coupled system.
pub const NUM_JOINTS: usize = 6;

pub type RelativeJacobian = SMatrix<f64, 3, NUM_JOINTS>;

/// Stacked joint vector ordered `[q_B; q_A]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointVector(pub [f64; NUM_JOINTS]);

impl JointVector {
    pub fn from_parts(q_b: [f64; 3], q_a: [f64; 3]) -> Self {
        Self([q_b[0], q_b[1], q_b[2], q_a[0], q_a[1], q_a[2]])
    }

    pub fn b(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn a(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualArmSystem {
    pub arm_a: PlanarArm3R,
    pub arm_b: PlanarArm3R,
    /// Pose of robot A's base in robot B's base frame; constant over a solve.
    pub base_transform: Transform2,
}

impl DualArmSystem {
    pub fn new(arm_a: PlanarArm3R, arm_b: PlanarArm3R, base_transform: Transform2) -> Self {
        Self {
            arm_a,
            arm_b,
            base_transform,
        }
    }

    /// Per-joint limits in `[B; A]` order.
    pub fn joint_limits(&self) -> [JointLimits; NUM_JOINTS] {
        let b = &self.arm_b.limits;
        let a = &self.arm_a.limits;
        [b[0], b[1], b[2], a[0], a[1], a[2]]
    }

    /// Pose of robot A's tool in robot B's tool frame.
    pub fn relative_fk(&self, q: &JointVector) -> Pose2 {
        self.relative_transform(q).into()
    }

    pub fn relative_transform(&self, q: &JointVector) -> Transform2 {
        let t_b = self.arm_b.forward_kinematics(&q.b()).to_transform();
        let t_a = self.arm_a.forward_kinematics(&q.a()).to_transform();
        compose(&compose(&invert(&t_b), &self.base_transform), &t_a)
    }

    /// Relative Jacobian with column blocks `[B | A]`.
    pub fn relative_jacobian(&self, q: &JointVector) -> RelativeJacobian {
        self.relative_fk_and_jacobian(q).1
    }

    pub fn relative_fk_and_jacobian(&self, q: &JointVector) -> (Pose2, RelativeJacobian) {
        let (qb, qa) = (q.b(), q.a());
        let t_b = self.arm_b.forward_kinematics(&qb).to_transform();
        let t_a = self.arm_a.forward_kinematics(&qa).to_transform();
        let tb_from_bb = invert(&t_b);
        let tb_from_ba = compose(&tb_from_bb, &self.base_transform);
        let tb_from_ta = compose(&tb_from_ba, &t_a);

        let psi = twist_transfer(&tb_from_ta).psi;
        let omega_bb = twist_transfer(&tb_from_bb).omega;
        let omega_ba = twist_transfer(&tb_from_ba).omega;

        let block_b: Matrix3<f64> = -(psi * omega_bb * self.arm_b.jacobian(&qb));
        let block_a: Matrix3<f64> = omega_ba * self.arm_a.jacobian(&qa);

        let mut j = RelativeJacobian::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&block_b);
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&block_a);
        (tb_from_ta.into(), j)
    }
}

/// The reference two-arm cell: identical 3R arms, A's base 4 m along B's x axis.
pub fn reference_system() -> DualArmSystem {
    let arm = crate::arm::reference_arm();
    DualArmSystem::new(arm.clone(), arm, Transform2::from_translation(4.0, 0.0))
}
