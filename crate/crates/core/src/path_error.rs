//! Cartesian tracking error of the relative path and its gradient with
//! respect to the trajectory coefficients.
//!
//! The desired poses live in robot B's tool frame, so they are fixed data:
//! nothing here ever recomputes them from joint positions.

use std::fmt;

use nalgebra::{SMatrix, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::chain::{DualArmSystem, JointVector, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{wrap, Pose2};
use crate::trajectory::{BasisTable, PathGrid, TrajectoryParams};

/// Exponent of the aggregate error; `Max` is the p = ∞ limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PNorm {
    Finite(f64),
    Max,
}

impl Default for PNorm {
    fn default() -> Self {
        PNorm::Finite(2.0)
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PNorm::Finite(p) => write!(f, "{p}"),
            PNorm::Max => f.write_str("inf"),
        }
    }
}

impl Serialize for PNorm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PNorm::Finite(p) => s.serialize_f64(*p),
            PNorm::Max => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(p) if p >= 1.0 && p.is_finite() => Ok(PNorm::Finite(p)),
            Repr::Text(t) if t == "inf" || t == "max" => Ok(PNorm::Max),
            _ => Err(serde::de::Error::custom(
                "p_norm must be a number >= 1 or \"inf\"",
            )),
        }
    }
}

/// Desired relative path sampled on the grid, expressed in robot B's tool
/// frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathSpecRepr")]
pub struct PathSpec {
    grid: PathGrid,
    desired: Vec<Pose2>,
    orientation_weight: f64,
    p_norm: PNorm,
}

#[derive(Deserialize)]
struct PathSpecRepr {
    grid: PathGrid,
    desired: Vec<Pose2>,
    orientation_weight: f64,
    p_norm: PNorm,
}

impl TryFrom<PathSpecRepr> for PathSpec {
    type Error = Error;

    fn try_from(r: PathSpecRepr) -> Result<Self> {
        PathSpec::new(r.grid, r.desired)?
            .with_orientation_weight(r.orientation_weight)?
            .with_p_norm(r.p_norm)
    }
}

impl PathSpec {
    pub fn new(grid: PathGrid, desired: Vec<Pose2>) -> Result<Self> {
        if grid.len() != desired.len() {
            return Err(Error::DimensionMismatch {
                context: "desired poses",
                expected: grid.len(),
                actual: desired.len(),
            });
        }
        if desired
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.phi.is_finite()))
        {
            return Err(Error::NonFinite("desired path"));
        }
        Ok(Self {
            grid,
            desired,
            orientation_weight: 1.0,
            p_norm: PNorm::default(),
        })
    }

    pub fn with_orientation_weight(mut self, w: f64) -> Result<Self> {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::InvalidConfig(
                "orientation weight must be >= 0".into(),
            ));
        }
        self.orientation_weight = w;
        Ok(self)
    }

    pub fn with_p_norm(mut self, p: PNorm) -> Result<Self> {
        if let PNorm::Finite(v) = p {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(Error::InvalidConfig("p-norm exponent must be >= 1".into()));
            }
        }
        self.p_norm = p;
        Ok(self)
    }

    /// Same path with every desired orientation turned by `offset`.
    pub fn with_tool_offset(&self, offset: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.desired {
            *p = Pose2::new(p.x, p.y, p.phi + offset);
        }
        out
    }

    pub fn grid(&self) -> &PathGrid {
        &self.grid
    }

    pub fn desired(&self) -> &[Pose2] {
        &self.desired
    }

    pub fn orientation_weight(&self) -> f64 {
        self.orientation_weight
    }

    pub fn p_norm(&self) -> PNorm {
        self.p_norm
    }

    pub fn len(&self) -> usize {
        self.desired.len()
    }

    pub fn is_empty(&self) -> bool {
        self.desired.is_empty()
    }

    fn check(&self, table: &BasisTable, theta: &TrajectoryParams) -> Result<()> {
        if table.points() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "basis table rows vs path points",
                expected: self.len(),
                actual: table.points(),
            });
        }
        if theta.joints() != NUM_JOINTS {
            return Err(Error::DimensionMismatch {
                context: "trajectory joints",
                expected: NUM_JOINTS,
                actual: theta.joints(),
            });
        }
        theta.check_table(table)
    }

    /// `e_i = χᵈ_i ⊖ χ_i`, orientation wrapped and weighted.
    fn error_against(&self, i: usize, actual: &Pose2) -> Vector3<f64> {
        let d = &self.desired[i];
        Vector3::new(
            d.x - actual.x,
            d.y - actual.y,
            self.orientation_weight * wrap(d.phi - actual.phi),
        )
    }
}

pub(crate) fn joint_vector_at(
    table: &BasisTable,
    theta: &TrajectoryParams,
    i: usize,
) -> JointVector {
    let q = theta.joints_at(table, i);
    JointVector(std::array::from_fn(|j| q[j]))
}

pub fn pointwise_error(
    sys: &DualArmSystem,
    table: &BasisTable,
    theta: &TrajectoryParams,
    spec: &PathSpec,
    i: usize,
) -> Result<Vector3<f64>> {
    spec.check(table, theta)?;
    if i >= spec.len() {
        return Err(Error::DimensionMismatch {
            context: "path index",
            expected: spec.len(),
            actual: i,
        });
    }
    let actual = sys.relative_fk(&joint_vector_at(table, theta, i));
    Ok(spec.error_against(i, &actual))
}

fn aggregate(norms: &[f64], p: PNorm) -> f64 {
    match p {
        PNorm::Max => norms.iter().fold(0.0, |m: f64, &v| m.max(v)),
        PNorm::Finite(p) if p == 2.0 => norms.iter().map(|v| v * v).sum::<f64>().sqrt(),
        PNorm::Finite(p) => norms.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p),
    }
}

/// Everything the solver needs from one pass over the path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathErrorEval {
    /// `‖e_i‖₂` per grid point.
    pub pointwise: Vec<f64>,
    /// Aggregate error under the spec's p-norm.
    pub total: f64,
    /// `max_i ‖e_i‖₂`.
    pub max: f64,
    pub gradient: Option<Vec<f64>>,
}

/// Evaluates `E`, `max_i ‖e_i‖` and, if requested, `∇_θ E`.
pub fn evaluate(
    exec: Execution,
    sys: &DualArmSystem,
    table: &BasisTable,
    theta: &TrajectoryParams,
    spec: &PathSpec,
    with_gradient: bool,
) -> Result<PathErrorEval> {
    spec.check(table, theta)?;
    type Row = SMatrix<f64, 3, NUM_JOINTS>;
    let points: Vec<(Vector3<f64>, Option<Row>)> = exec.map_range(spec.len(), |i| {
        let q = joint_vector_at(table, theta, i);
        if with_gradient {
            let (pose, j) = sys.relative_fk_and_jacobian(&q);
            (spec.error_against(i, &pose), Some(j))
        } else {
            (spec.error_against(i, &sys.relative_fk(&q)), None)
        }
    });
    let pointwise: Vec<f64> = points.iter().map(|(e, _)| e.norm()).collect();
    let total = aggregate(&pointwise, spec.p_norm);
    let max = aggregate(&pointwise, PNorm::Max);
    if pointwise.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("path error"));
    }

    let gradient = if with_gradient {
        let p = match spec.p_norm {
            PNorm::Max => return Err(Error::NonSmoothPoint("p = inf has no gradient")),
            PNorm::Finite(p) => p,
        };
        let d = theta.dim();
        let mut grad = vec![0.0; NUM_JOINTS * d];
        if total > 0.0 {
            if p < 2.0 && pointwise.contains(&0.0) {
                return Err(Error::NonSmoothPoint("zero pointwise error with p < 2"));
            }
            let weights = Vector3::new(1.0, 1.0, spec.orientation_weight);
            let scale_e = total.powf(1.0 - p);
            let contributions = exec.map_range(spec.len(), |i| {
                let (e, j) = &points[i];
                let j = j.as_ref().expect("jacobian requested");
                let n = pointwise[i];
                let coeff = if n == 0.0 {
                    0.0
                } else {
                    -scale_e * n.powf(p - 2.0)
                };
                // ∂E/∂χ_i J(q_i): a 1×n row
                let de_dchi = (coeff * e.component_mul(&weights)).transpose();
                let row = de_dchi * j;
                let mut local = vec![0.0; NUM_JOINTS * d];
                for jj in 0..NUM_JOINTS {
                    let r = row[jj];
                    for k in 0..d {
                        local[jj * d + k] = r * table.p[(i, k)];
                    }
                }
                local
            });
            for c in &contributions {
                for (g, v) in grad.iter_mut().zip(c) {
                    *g += v;
                }
            }
        }
        Some(grad)
    } else {
        None
    };
    Ok(PathErrorEval {
        pointwise,
        total,
        max,
        gradient,
    })
}

pub fn total_error(
    sys: &DualArmSystem,
    table: &BasisTable,
    theta: &TrajectoryParams,
    spec: &PathSpec,
) -> Result<f64> {
    Ok(evaluate(Execution::Sequential, sys, table, theta, spec, false)?.total)
}

pub fn max_error(
    sys: &DualArmSystem,
    table: &BasisTable,
    theta: &TrajectoryParams,
    spec: &PathSpec,
) -> Result<f64> {
    Ok(evaluate(Execution::Sequential, sys, table, theta, spec, false)?.max)
}

pub fn error_gradient(
    sys: &DualArmSystem,
    table: &BasisTable,
    theta: &TrajectoryParams,
    spec: &PathSpec,
) -> Result<Vec<f64>> {
    Ok(
        evaluate(Execution::Sequential, sys, table, theta, spec, true)?
            .gradient
            .expect("gradient requested"),
    )
}

#[cfg(test)]
pub(crate) mod tests {
    use std::f64::consts::PI;

    use approx::assert_abs_diff_eq;
    use nalgebra::SVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::chain::reference_system;
    use crate::geometry::{compose, invert};
    use crate::trajectory::{eval_q, PolyBasis};

    /// Random smooth coefficients around a nominal configuration.
    pub(crate) fn random_theta(rng: &mut ChaCha8Rng, d: usize) -> TrajectoryParams {
        let mut t = TrajectoryParams::zeros(NUM_JOINTS, d);
        for j in 0..NUM_JOINTS {
            let c = t.joint_mut(j);
            c[0] = rng.gen_range(-PI..PI);
            for k in 1..d {
                c[k] = rng.gen_range(-0.3..0.3) / k as f64;
            }
        }
        t
    }

    /// Desired path = actual relative path of `theta`, plus `shift` in x.
    fn spec_from(
        theta: &TrajectoryParams,
        table: &BasisTable,
        grid: &PathGrid,
        shift: f64,
    ) -> PathSpec {
        let sys = reference_system();
        let desired = (0..grid.len())
            .map(|i| {
                let p = sys.relative_fk(&joint_vector_at(table, theta, i));
                Pose2::new(p.x + shift, p.y, p.phi)
            })
            .collect();
        PathSpec::new(grid.clone(), desired).unwrap()
    }

    #[test]
    fn exact_tracking_has_zero_error_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = PathGrid::uniform(20).unwrap();
        let table = PolyBasis::monomial(5).table(&grid);
        let theta = random_theta(&mut rng, 6);
        let spec = spec_from(&theta, &table, &grid, 0.0);
        let sys = reference_system();
        for i in 0..grid.len() {
            let e = pointwise_error(&sys, &table, &theta, &spec, i).unwrap();
            assert_eq!(e, Vector3::zeros());
        }
        assert_eq!(total_error(&sys, &table, &theta, &spec).unwrap(), 0.0);
        assert!(error_gradient(&sys, &table, &theta, &spec)
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
    }

    #[test]
    fn shifted_desired_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid = PathGrid::uniform(10).unwrap();
        let table = PolyBasis::monomial(5).table(&grid);
        let theta = random_theta(&mut rng, 6);
        let spec = spec_from(&theta, &table, &grid, 0.001);
        let sys = reference_system();
        let e = pointwise_error(&sys, &table, &theta, &spec, 3).unwrap();
        assert_abs_diff_eq!(e, Vector3::new(0.001, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn single_nonzero_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = PathGrid::uniform(10).unwrap();
        let table = PolyBasis::monomial(5).table(&grid);
        let theta = random_theta(&mut rng, 6);
        let exact = spec_from(&theta, &table, &grid, 0.0);
        let mut desired = exact.desired().to_vec();
        desired[5].y += 0.003;
        let spec = PathSpec::new(grid, desired).unwrap();
        let sys = reference_system();
        assert_abs_diff_eq!(
            total_error(&sys, &table, &theta, &spec).unwrap(),
            0.003,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pointwise_matches_transform_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = PathGrid::uniform(15).unwrap();
        let table = PolyBasis::monomial(9).table(&grid);
        let sys = reference_system();
        let theta = random_theta(&mut rng, 10);
        let desired: Vec<Pose2> = (0..15)
            .map(|_| {
                Pose2::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-PI..PI),
                )
            })
            .collect();
        let spec = PathSpec::new(grid, desired.clone())
            .unwrap()
            .with_orientation_weight(0.5)
            .unwrap();
        let q = eval_q(&table, &theta).unwrap();
        for i in 0..15 {
            let tb = sys
                .arm_b
                .forward_kinematics(&[q[(i, 0)], q[(i, 1)], q[(i, 2)]])
                .to_transform();
            let ta = sys
                .arm_a
                .forward_kinematics(&[q[(i, 3)], q[(i, 4)], q[(i, 5)]])
                .to_transform();
            let rel = compose(&invert(&tb), &compose(&sys.base_transform, &ta));
            let e = pointwise_error(&sys, &table, &theta, &spec, i).unwrap();
            assert!((e.x - (desired[i].x - rel.translation.x)).abs() < 1e-12);
            assert!((e.y - (desired[i].y - rel.translation.y)).abs() < 1e-12);
            assert!((e.z - 0.5 * wrap(desired[i].phi - rel.rotation)).abs() < 1e-12);
        }
    }

    fn perturbed_spec(
        rng: &mut ChaCha8Rng,
        grid: &PathGrid,
        table: &BasisTable,
        theta: &TrajectoryParams,
    ) -> PathSpec {
        let exact = spec_from(theta, table, grid, 0.0);
        let desired = exact
            .desired()
            .iter()
            .map(|p| {
                Pose2::new(
                    p.x + rng.gen_range(-0.01..0.01),
                    p.y + rng.gen_range(-0.01..0.01),
                    p.phi + rng.gen_range(-0.01..0.01),
                )
            })
            .collect();
        PathSpec::new(grid.clone(), desired).unwrap()
    }

    #[test]
    fn p2_sum_identity_and_norm_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = PathGrid::uniform(30).unwrap();
        let table = PolyBasis::monomial(9).table(&grid);
        let sys = reference_system();
        for _ in 0..10 {
            let theta = random_theta(&mut rng, 10);
            let spec = perturbed_spec(&mut rng, &grid, &table, &theta);
            let eval = evaluate(Execution::Sequential, &sys, &table, &theta, &spec, false).unwrap();
            let sum: f64 = (0..30)
                .map(|i| {
                    pointwise_error(&sys, &table, &theta, &spec, i)
                        .unwrap()
                        .norm_squared()
                })
                .sum();
            assert!((eval.total * eval.total - sum).abs() < 1e-12);
            assert!(eval.max <= eval.total + 1e-15);
            assert!(eval.total <= (30f64).sqrt() * eval.max + 1e-15);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let grid = PathGrid::uniform(25).unwrap();
        let table = PolyBasis::monomial(9).table(&grid);
        let sys = reference_system();
        for p in [2.0, 3.0] {
            let theta = random_theta(&mut rng, 10);
            let spec = perturbed_spec(&mut rng, &grid, &table, &theta)
                .with_p_norm(PNorm::Finite(p))
                .unwrap();
            let g = error_gradient(&sys, &table, &theta, &spec).unwrap();
            let h = 1e-7;
            let mut fd = vec![0.0; g.len()];
            for k in 0..g.len() {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp.flat_mut()[k] += h;
                tm.flat_mut()[k] -= h;
                fd[k] = (total_error(&sys, &table, &tp, &spec).unwrap()
                    - total_error(&sys, &table, &tm, &spec).unwrap())
                    / (2.0 * h);
            }
            let num: f64 = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!(num / den < 1e-5, "p={p} rel={}", num / den);
        }
    }

    #[test]
    fn gradient_is_orthogonal_to_nullspace_lifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grid = PathGrid::single(0.6);
        let table = PolyBasis::monomial(9).table(&grid);
        let sys = reference_system();
        for _ in 0..10 {
            let theta = random_theta(&mut rng, 10);
            let spec = PathSpec {
                grid: grid.clone(),
                desired: vec![Pose2::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    0.3,
                )],
                orientation_weight: 1.0,
                p_norm: PNorm::Finite(2.0),
            };
            let g = error_gradient(&sys, &table, &theta, &spec).unwrap();
            let jac = sys.relative_jacobian(&joint_vector_at(&table, &theta, 0));
            let projector =
                SMatrix::<f64, 6, 6>::identity() - jac.pseudo_inverse(1e-12).unwrap() * jac;
            let u = projector * SVector::<f64, 6>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let p: Vec<f64> = table.p.row(0).iter().copied().collect();
            let pp: f64 = p.iter().map(|v| v * v).sum();
            let mut dot = 0.0;
            for j in 0..6 {
                for k in 0..10 {
                    dot += g[j * 10 + k] * u[j] * p[k] / pp;
                }
            }
            assert!(dot.abs() < 1e-9, "dot={dot}");
        }
    }

    #[test]
    fn non_smooth_points_are_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grid = PathGrid::uniform(10).unwrap();
        let table = PolyBasis::monomial(5).table(&grid);
        let sys = reference_system();
        let theta = random_theta(&mut rng, 6);
        let exact = spec_from(&theta, &table, &grid, 0.0);
        let mut desired = exact.desired().to_vec();
        desired[2].x += 0.01;
        let spec = PathSpec::new(grid, desired).unwrap();
        let p15 = spec.clone().with_p_norm(PNorm::Finite(1.5)).unwrap();
        assert!(matches!(
            error_gradient(&sys, &table, &theta, &p15),
            Err(Error::NonSmoothPoint(_))
        ));
        let inf = spec.clone().with_p_norm(PNorm::Max).unwrap();
        assert!(matches!(
            error_gradient(&sys, &table, &theta, &inf),
            Err(Error::NonSmoothPoint(_))
        ));
        assert_abs_diff_eq!(
            total_error(&sys, &table, &theta, &inf).unwrap(),
            0.01,
            epsilon = 1e-12
        );
        // p = 2 tolerates exact points.
        assert!(error_gradient(&sys, &table, &theta, &spec).is_ok());
    }

    #[test]
    fn desired_path_is_not_rederived() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid = PathGrid::uniform(12).unwrap();
        let table = PolyBasis::monomial(9).table(&grid);
        let sys = reference_system();
        let theta = random_theta(&mut rng, 10);
        let spec = perturbed_spec(&mut rng, &grid, &table, &theta);
        let e1 = total_error(&sys, &table, &theta, &spec).unwrap();
        let other = random_theta(&mut rng, 10);
        let _ = total_error(&sys, &table, &other, &spec).unwrap();
        let e2 = total_error(&sys, &table, &theta, &spec).unwrap();
        assert_eq!(e1.to_bits(), e2.to_bits());
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let grid = PathGrid::uniform(200).unwrap();
        let table = PolyBasis::monomial(9).table(&grid);
        let sys = reference_system();
        let theta = random_theta(&mut rng, 10);
        let spec = perturbed_spec(&mut rng, &grid, &table, &theta);
        let a = evaluate(Execution::Sequential, &sys, &table, &theta, &spec, true).unwrap();
        let b = evaluate(Execution::Parallel, &sys, &table, &theta, &spec, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn p_norm_serde() {
        assert_eq!(serde_json::to_string(&PNorm::Max).unwrap(), "\"inf\"");
        assert_eq!(
            serde_json::from_str::<PNorm>("2.0").unwrap(),
            PNorm::Finite(2.0)
        );
        assert!(serde_json::from_str::<PNorm>("0.5").is_err());
    }
}
