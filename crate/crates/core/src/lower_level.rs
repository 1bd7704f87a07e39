//! Maximum constant path speed for a fixed joint trajectory.
//!
//! With `ṡ` constant, joint `j` at grid point `i` has velocity `p'_i θ_j ṡ`
//! and acceleration `p''_i θ_j ṡ²`. When every lower limit is negative and
//! every upper limit positive, the largest feasible `ṡ²` is `1 / V` with
//!
//! ```text
//! V(θ) = max_{j,i} max{ (max{p'_iθ_j / v̄_j, p'_iθ_j / v̲_j})²,
//!                        max{p''_iθ_j / ā_j, p''_iθ_j / a̲_j} }
//! ```
//!
//! `V` is the squared traversal time. It is a pointwise maximum of convex
//! functions of `θ`, so the gradient of any maximizing term is a
//! subgradient.

use serde::{Deserialize, Serialize};

use crate::arm::{Bounds, JointLimits};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::trajectory::{row_dot, BasisTable, TrajectoryParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Velocity,
    Acceleration,
}

/// The term attaining the maximum in `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveConstraint {
    /// Joint index in `[B; A]` order.
    pub joint: usize,
    /// Grid index.
    pub point: usize,
    pub kind: ConstraintKind,
    /// The limit that binds (upper or lower, depending on the sign of the
    /// path derivative).
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerLevelResult {
    /// Squared minimum traversal time, in s².
    pub value: f64,
    /// Optimal constant path speed `1/√V`.
    pub s_dot: f64,
    pub active: ActiveConstraint,
    /// Gradient of the active term w.r.t. the flattened coefficients.
    pub subgradient: Vec<f64>,
}

impl LowerLevelResult {
    /// Traversal time `1/ṡ`.
    pub fn final_time(&self) -> f64 {
        1.0 / self.s_dot
    }
}

pub fn validate_limits(limits: &[JointLimits]) -> Result<()> {
    for (j, l) in limits.iter().enumerate() {
        l.validate(j)?;
    }
    Ok(())
}

fn check_dims(limits: &[JointLimits], table: &BasisTable, theta: &TrajectoryParams) -> Result<()> {
    if limits.len() != theta.joints() {
        return Err(Error::DimensionMismatch {
            context: "joint limits",
            expected: theta.joints(),
            actual: limits.len(),
        });
    }
    theta.check_table(table)
}

/// Velocity ratio term and the bound it divides by.
#[inline]
fn velocity_term(v: f64, b: Bounds) -> (f64, f64) {
    let (ru, rl) = (v / b.upper, v / b.lower);
    let (r, bound) = if ru >= rl {
        (ru, b.upper)
    } else {
        (rl, b.lower)
    };
    (r * r, bound)
}

#[inline]
fn acceleration_term(a: f64, b: Bounds) -> (f64, f64) {
    let (ru, rl) = (a / b.upper, a / b.lower);
    if ru >= rl {
        (ru, b.upper)
    } else {
        (rl, b.lower)
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    value: f64,
    active: ActiveConstraint,
    /// `p'_iθ_j` for velocity terms, unused otherwise.
    rate: f64,
}

/// Best term of one joint; ties keep the lowest point, velocity first.
fn joint_max(j: usize, limit: &JointLimits, table: &BasisTable, theta: &[f64]) -> Candidate {
    let mut best = Candidate {
        value: f64::NEG_INFINITY,
        active: ActiveConstraint {
            joint: j,
            point: 0,
            kind: ConstraintKind::Velocity,
            bound: limit.velocity.upper,
        },
        rate: 0.0,
    };
    for i in 0..table.points() {
        let v = row_dot(&table.dp, i, theta);
        let (tv, bv) = velocity_term(v, limit.velocity);
        if tv > best.value {
            best = Candidate {
                value: tv,
                active: ActiveConstraint {
                    joint: j,
                    point: i,
                    kind: ConstraintKind::Velocity,
                    bound: bv,
                },
                rate: v,
            };
        }
        let a = row_dot(&table.ddp, i, theta);
        let (ta, ba) = acceleration_term(a, limit.acceleration);
        if ta > best.value {
            best = Candidate {
                value: ta,
                active: ActiveConstraint {
                    joint: j,
                    point: i,
                    kind: ConstraintKind::Acceleration,
                    bound: ba,
                },
                rate: 0.0,
            };
        }
    }
    best
}

/// Closed-form `V(θ)` with its active term and a subgradient.
pub fn evaluate_v(
    limits: &[JointLimits],
    table: &BasisTable,
    theta: &TrajectoryParams,
) -> Result<LowerLevelResult> {
    evaluate_v_with(Execution::Sequential, limits, table, theta)
}

pub fn evaluate_v_with(
    exec: Execution,
    limits: &[JointLimits],
    table: &BasisTable,
    theta: &TrajectoryParams,
) -> Result<LowerLevelResult> {
    check_dims(limits, table, theta)?;
    validate_limits(limits)?;
    let per_joint = exec.map_jobs(theta.joints(), |j| {
        joint_max(j, &limits[j], table, theta.joint(j))
    });
    let mut best = per_joint[0];
    for c in &per_joint[1..] {
        if c.value > best.value {
            best = *c;
        }
    }
    if !best.value.is_finite() {
        return Err(Error::NonFinite("trajectory coefficients"));
    }
    if best.value <= 0.0 {
        return Err(Error::UnboundedSpeed);
    }

    let d = theta.dim();
    let mut subgradient = vec![0.0; theta.joints() * d];
    let (j, i) = (best.active.joint, best.active.point);
    let block = &mut subgradient[j * d..(j + 1) * d];
    match best.active.kind {
        ConstraintKind::Velocity => {
            let scale = 2.0 * best.rate / (best.active.bound * best.active.bound);
            for (k, g) in block.iter_mut().enumerate() {
                *g = scale * table.dp[(i, k)];
            }
        }
        ConstraintKind::Acceleration => {
            for (k, g) in block.iter_mut().enumerate() {
                *g = table.ddp[(i, k)] / best.active.bound;
            }
        }
    }
    Ok(LowerLevelResult {
        value: best.value,
        s_dot: 1.0 / best.value.sqrt(),
        active: best.active,
        subgradient,
    })
}

/// Whether every velocity/acceleration limit holds at `ṡ² = x`.
fn feasible_at(
    limits: &[JointLimits],
    table: &BasisTable,
    theta: &TrajectoryParams,
    x: f64,
) -> bool {
    let s_dot = x.sqrt();
    for (j, l) in limits.iter().enumerate() {
        let th = theta.joint(j);
        for i in 0..table.points() {
            let v = row_dot(&table.dp, i, th) * s_dot;
            let a = row_dot(&table.ddp, i, th) * x;
            if !(l.velocity.contains(v, 0.0) && l.acceleration.contains(a, 0.0)) {
                return false;
            }
        }
    }
    true
}

/// Independent check of `V` by bisection on `ṡ²` over the raw constraint
/// set. Returns `1 / (ṡ²)*`.
pub fn brute_force_oracle(
    limits: &[JointLimits],
    table: &BasisTable,
    theta: &TrajectoryParams,
) -> Result<f64> {
    check_dims(limits, table, theta)?;
    validate_limits(limits)?;
    // The feasible set in x = ṡ² is [0, x*]; bracket x* by doubling/halving.
    let feasible = |x: f64| feasible_at(limits, table, theta, x);
    let (mut lo, mut hi) = if feasible(1.0) {
        let mut hi = 2.0;
        while feasible(hi) {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::UnboundedSpeed);
            }
        }
        (hi / 2.0, hi)
    } else {
        let mut lo = 0.5;
        while !feasible(lo) {
            lo /= 2.0;
            if lo == 0.0 {
                return Err(Error::NonFinite("oracle bracket"));
            }
        }
        (lo, 2.0 * lo)
    };
    while (hi - lo) > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(1.0 / (0.5 * (lo + hi)))
}

/// Outcome of replaying a trajectory at a given constant path speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Largest amount by which any velocity or acceleration leaves its
    /// bounds; zero when all hold.
    pub max_violation: f64,
    /// Smallest distance from any constraint to the bound it approaches.
    pub min_gap: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }

    pub fn is_tight(&self, tol: f64) -> bool {
        self.min_gap <= tol
    }
}

pub fn check_feasibility(
    limits: &[JointLimits],
    table: &BasisTable,
    theta: &TrajectoryParams,
    s_dot: f64,
) -> Result<FeasibilityReport> {
    check_dims(limits, table, theta)?;
    let mut max_violation: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    let mut visit = |value: f64, b: Bounds| {
        max_violation = max_violation.max(value - b.upper).max(b.lower - value);
        let gap = if value >= 0.0 {
            b.upper - value
        } else {
            value - b.lower
        };
        min_gap = min_gap.min(gap.abs());
    };
    for (j, l) in limits.iter().enumerate() {
        let th = theta.joint(j);
        for i in 0..table.points() {
            visit(row_dot(&table.dp, i, th) * s_dot, l.velocity);
            visit(row_dot(&table.ddp, i, th) * s_dot * s_dot, l.acceleration);
        }
    }
    Ok(FeasibilityReport {
        max_violation,
        min_gap,
    })
}
