//! Self-checks runnable from the command line: each compares a closed-form
//! quantity against a brute-force or finite-difference reference on random
//! inputs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arm::{reference_arm, Bounds, ElbowBranch, JointLimits};
use crate::chain::{reference_system, JointVector, NUM_JOINTS};
use crate::error::Result;
use crate::geometry::{wrap, Pose2};
use crate::lower_level::{brute_force_oracle, evaluate_v};
use crate::path_error::{error_gradient, total_error, PathSpec};
use crate::trajectory::{PathGrid, PolyBasis, TrajectoryParams};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    /// Largest error seen.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<28} cases={:<4} worst={:.3e} tol={:.0e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst,
            self.tolerance
        )
    }
}

fn random_limits(rng: &mut ChaCha8Rng) -> Vec<JointLimits> {
    (0..NUM_JOINTS)
        .map(|_| JointLimits {
            position: Bounds::symmetric(2.0 * PI),
            velocity: Bounds::new(-rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0)),
            acceleration: Bounds::new(-rng.gen_range(5.0..40.0), rng.gen_range(5.0..40.0)),
        })
        .collect()
}

fn random_theta(rng: &mut ChaCha8Rng, d: usize) -> TrajectoryParams {
    let mut t = TrajectoryParams::zeros(NUM_JOINTS, d);
    for j in 0..NUM_JOINTS {
        let c = t.joint_mut(j);
        c[0] = rng.gen_range(-PI..PI);
        for (k, v) in c.iter_mut().enumerate().skip(1) {
            *v = rng.gen_range(-0.5..0.5) / k as f64;
        }
    }
    t
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn lower_level_oracle(seed: u64, cases: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = PolyBasis::monomial(9).table(&PathGrid::uniform(50)?);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let limits = random_limits(&mut rng);
        let theta = random_theta(&mut rng, 10);
        let v = evaluate_v(&limits, &table, &theta)?.value;
        worst = worst.max(rel(v, brute_force_oracle(&limits, &table, &theta)?));
    }
    Ok(CheckResult {
        name: "lower-level vs bisection",
        cases,
        worst,
        tolerance: 1e-6,
    })
}

pub fn relative_jacobian(seed: u64, cases: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = reference_system();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let q = JointVector(std::array::from_fn(|_| rng.gen_range(-PI..PI)));
        let jac = sys.relative_jacobian(&q);
        for k in 0..NUM_JOINTS {
            let (mut qp, mut qm) = (q, q);
            qp.0[k] += h;
            qm.0[k] -= h;
            let (p, m) = (sys.relative_fk(&qp), sys.relative_fk(&qm));
            let fd = [
                (p.x - m.x) / (2.0 * h),
                (p.y - m.y) / (2.0 * h),
                wrap(p.phi - m.phi) / (2.0 * h),
            ];
            for (r, v) in fd.iter().enumerate() {
                worst = worst.max((jac[(r, k)] - v).abs());
            }
        }
    }
    Ok(CheckResult {
        name: "relative Jacobian vs FD",
        cases,
        worst,
        tolerance: 1e-6,
    })
}

pub fn path_error_gradient(seed: u64, cases: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = reference_system();
    let grid = PathGrid::uniform(30)?;
    let table = PolyBasis::monomial(9).table(&grid);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let reference = random_theta(&mut rng, 10);
        let desired = (0..grid.len())
            .map(|i| {
                let q = reference.joints_at(&table, i);
                sys.relative_fk(&JointVector(std::array::from_fn(|j| q[j])))
            })
            .collect();
        let spec = PathSpec::new(grid.clone(), desired)?;
        let mut theta = reference.clone();
        for v in theta.flat_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
        let g = error_gradient(&sys, &table, &theta, &spec)?;
        let h = 1e-6;
        let mut num = 0.0;
        let mut den: f64 = 0.0;
        for k in 0..g.len() {
            let (mut tp, mut tm) = (theta.clone(), theta.clone());
            tp.flat_mut()[k] += h;
            tm.flat_mut()[k] -= h;
            let fd = (total_error(&sys, &table, &tp, &spec)?
                - total_error(&sys, &table, &tm, &spec)?)
                / (2.0 * h);
            num += (g[k] - fd).powi(2);
            den += fd * fd;
        }
        worst = worst.max((num / den.max(1e-300)).sqrt());
    }
    Ok(CheckResult {
        name: "path-error gradient vs FD",
        cases,
        worst,
        tolerance: 1e-5,
    })
}

pub fn ik_round_trip(seed: u64, cases: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arm = reference_arm();
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        for branch in [ElbowBranch::Down, ElbowBranch::Up] {
            let mut q = [
                rng.gen_range(-PI..PI),
                rng.gen_range(0.1..3.0),
                rng.gen_range(-PI..PI),
            ];
            if branch == ElbowBranch::Up {
                q[1] = -q[1];
            }
            let pose = arm.forward_kinematics(&q);
            let back = arm.forward_kinematics(&arm.inverse_kinematics(&pose, branch)?);
            let err = Pose2::new(back.x - pose.x, back.y - pose.y, wrap(back.phi - pose.phi));
            worst = worst.max(err.x.abs().max(err.y.abs()).max(err.phi.abs()));
        }
    }
    Ok(CheckResult {
        name: "IK/FK round trip",
        cases,
        worst,
        tolerance: 1e-9,
    })
}

pub fn basis_derivatives(seed: u64, cases: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for basis in [PolyBasis::monomial(9), PolyBasis::legendre(9)] {
        for _ in 0..cases {
            let s = rng.gen_range(2.0 * h..1.0 - 2.0 * h);
            let row = |x: f64| basis.row(x);
            let r = row(s);
            let (p1, m1, p2, m2) = (row(s + h), row(s - h), row(s + 2.0 * h), row(s - 2.0 * h));
            for k in 0..basis.dim() {
                let d1 = (8.0 * (p1.p[k] - m1.p[k]) - (p2.p[k] - m2.p[k])) / (12.0 * h);
                let d2 = (8.0 * (p1.dp[k] - m1.dp[k]) - (p2.dp[k] - m2.dp[k])) / (12.0 * h);
                worst = worst
                    .max((d1 - r.dp[k]).abs() / (1.0 + r.dp[k].abs()))
                    .max((d2 - r.ddp[k]).abs() / (1.0 + r.ddp[k].abs()));
            }
        }
    }
    Ok(CheckResult {
        name: "basis derivatives vs FD",
        cases,
        worst,
        tolerance: 1e-8,
    })
}

/// Runs every check with a deterministic seed.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        lower_level_oracle(seed, 200)?,
        relative_jacobian(seed, 100)?,
        path_error_gradient(seed, 20)?,
        ik_round_trip(seed, 100)?,
        basis_derivatives(seed, 100)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_on_a_small_sample() {
        let checks = [
            lower_level_oracle(1, 10).unwrap(),
            relative_jacobian(1, 10).unwrap(),
            path_error_gradient(1, 2).unwrap(),
            ik_round_trip(1, 10).unwrap(),
            basis_derivatives(1, 10).unwrap(),
        ];
        for c in &checks {
            assert!(c.passed(), "{c}");
        }
    }
}
