//! Scenario configuration, the mock fan-blade path, initialization by
//! inverse kinematics and the single-arm vs dual-arm experiment.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::arm::{Bounds, ElbowBranch, JointLimits, PlanarArm3R};
use crate::chain::{DualArmSystem, JointVector, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::geometry::{compose, invert, wrap, Pose2, Transform2};
use crate::path_error::{self, PNorm, PathSpec};
use crate::solver::{self, Problem, SolveMode, SolveStatus, SolverConfig, SolverReport};
use crate::trajectory::{fit_theta, BasisKind, PathGrid, PolyBasis, TrajectoryParams};

/// Initial tool angles used by the reference experiment.
pub const DEFAULT_PHI_INITS: [f64; 5] = [5.12, 0.00, 1.04, 0.56, 4.76];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmConfig {
    pub link_lengths: [f64; 3],
    /// Symmetric bounds `[-b, b]` per joint.
    pub position_limits: [f64; 3],
    pub velocity_limits: [f64; 3],
    pub acceleration_limits: [f64; 3],
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self {
            link_lengths: [2.0, 1.5, 1.0],
            position_limits: [2.0 * PI; 3],
            velocity_limits: [1.75, 1.57, 1.0],
            acceleration_limits: [35.0, 31.4, 20.0],
        }
    }
}

impl ArmConfig {
    pub fn build(&self) -> Result<PlanarArm3R> {
        let limits = std::array::from_fn(|j| JointLimits {
            position: Bounds::symmetric(self.position_limits[j]),
            velocity: Bounds::symmetric(self.velocity_limits[j]),
            acceleration: Bounds::symmetric(self.acceleration_limits[j]),
        });
        PlanarArm3R::with_limits(self.link_lengths, limits)
    }
}

/// Parameters of the built-in leading-edge curve: a planar arc whose
/// curvature varies linearly with arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockPath {
    pub length: f64,
    pub curvature_start: f64,
    pub curvature_end: f64,
}

impl Default for MockPath {
    fn default() -> Self {
        Self {
            length: 1.0,
            curvature_start: 0.2,
            curvature_end: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathSource {
    Mock(MockPath),
    /// Pose list with columns `s,x,y,phi` in the part frame.
    File {
        file: PathBuf,
    },
}

impl Default for PathSource {
    fn default() -> Self {
        PathSource::Mock(MockPath::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub arm_a: ArmConfig,
    pub arm_b: ArmConfig,
    /// Base of robot A in robot B's base frame.
    pub base_offset: [f64; 2],
    pub base_rotation: f64,
    pub path: PathSource,
    /// Number of grid points `N + 1`; ignored for file paths.
    pub points: usize,
    pub basis_degree: usize,
    pub basis_kind: BasisKind,
    pub p_norm: PNorm,
    /// Pose `(x, y, φ)` of the part frame in robot B's base frame at start.
    pub part_pose: [f64; 3],
    /// Pose of the part frame in robot B's tool frame.
    pub grasp: [f64; 3],
    pub branch_a: ElbowBranch,
    pub branch_b: ElbowBranch,
    pub solver: SolverConfig,
    pub phi_inits: Vec<f64>,
    pub output_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            arm_a: ArmConfig::default(),
            arm_b: ArmConfig::default(),
            base_offset: [4.0, 0.0],
            base_rotation: 0.0,
            path: PathSource::default(),
            points: 500,
            basis_degree: 9,
            basis_kind: BasisKind::default(),
            p_norm: PNorm::default(),
            part_pose: [2.0, 0.0, PI],
            grasp: [0.0, 0.0, 0.0],
            branch_a: ElbowBranch::Down,
            branch_b: ElbowBranch::Down,
            solver: SolverConfig::default(),
            phi_inits: DEFAULT_PHI_INITS.to_vec(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn pose_of(v: [f64; 3]) -> Pose2 {
    Pose2::new(v[0], v[1], v[2])
}

impl ScenarioConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.system()?;
        self.solver.validate()?;
        if self.points < 2 {
            return Err(Error::InvalidConfig("points must be at least 2".into()));
        }
        if self.p_norm == PNorm::Max {
            return Err(Error::InvalidConfig(
                "p_norm must be finite: the max norm has no gradient to follow".into(),
            ));
        }
        if self.phi_inits.is_empty() || self.phi_inits.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig(
                "phi_inits must be a non-empty list of finite angles".into(),
            ));
        }
        let finite = self
            .base_offset
            .iter()
            .chain(&self.part_pose)
            .chain(&self.grasp)
            .all(|v| v.is_finite());
        if !finite || !self.base_rotation.is_finite() {
            return Err(Error::InvalidConfig("poses must be finite".into()));
        }
        if let PathSource::Mock(m) = &self.path {
            if !(m.length > 0.0 && m.length.is_finite())
                || !m.curvature_start.is_finite()
                || !m.curvature_end.is_finite()
            {
                return Err(Error::InvalidConfig(
                    "mock path needs a positive length and finite curvature".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<DualArmSystem> {
        let base = Transform2::new(
            self.base_rotation,
            nalgebra::Vector2::new(self.base_offset[0], self.base_offset[1]),
        );
        Ok(DualArmSystem::new(
            self.arm_a.build()?,
            self.arm_b.build()?,
            base,
        ))
    }

    pub fn basis(&self) -> PolyBasis {
        PolyBasis {
            degree: self.basis_degree,
            kind: self.basis_kind,
        }
    }

    /// Desired path in robot B's tool frame, before any tool offset.
    pub fn path_spec(&self) -> Result<PathSpec> {
        let part_path = match &self.path {
            PathSource::Mock(m) => mock_fanblade_path(m, self.points - 1)?,
            PathSource::File { file } => read_path_file(file)?,
        };
        let grasp = pose_of(self.grasp).to_transform();
        let desired = part_path
            .desired()
            .iter()
            .map(|p| Pose2::from(compose(&grasp, &p.to_transform())))
            .collect();
        PathSpec::new(part_path.grid().clone(), desired)?.with_p_norm(self.p_norm)
    }

    /// Robot B's tool pose that puts the part frame at `part_pose`.
    pub fn b_tool_pose(&self) -> Pose2 {
        let part = pose_of(self.part_pose).to_transform();
        let grasp = pose_of(self.grasp).to_transform();
        Pose2::from(compose(&part, &invert(&grasp)))
    }
}

fn arc_heading(m: &MockPath, sigma: f64) -> f64 {
    m.curvature_start * sigma
        + (m.curvature_end - m.curvature_start) * sigma * sigma / (2.0 * m.length)
}

/// Position along the arc from `a` to `b` (arc length) by Simpson's rule.
fn arc_segment(m: &MockPath, a: f64, b: f64) -> (f64, f64) {
    // Panels of at most 1 mm keep the quadrature error far below 1e-12 m.
    let panels = (((b - a).abs() / 1e-3).ceil() as usize)
        .max(4)
        .next_multiple_of(2);
    let h = (b - a) / panels as f64;
    let (mut x, mut y) = (0.0, 0.0);
    for k in 0..=panels {
        let w = if k == 0 || k == panels {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let t = arc_heading(m, a + k as f64 * h);
        x += w * t.cos();
        y += w * t.sin();
    }
    (x * h / 3.0, y * h / 3.0)
}

/// Mock leading-edge curve sampled at `n + 1` points uniform in arc length,
/// in the part frame: the arc midpoint sits at the origin with its tangent
/// along +y, and each orientation follows the tangent.
pub fn mock_fanblade_path(m: &MockPath, n: usize) -> Result<PathSpec> {
    if n < 1 {
        return Err(Error::InvalidConfig(
            "mock path needs at least one segment".into(),
        ));
    }
    let grid = PathGrid::uniform(n + 1)?;
    let mut raw = Vec::with_capacity(n + 1);
    let (mut x, mut y) = (0.0, 0.0);
    let mut prev = 0.0;
    for &s in grid.s() {
        let sigma = s * m.length;
        let (dx, dy) = arc_segment(m, prev, sigma);
        x += dx;
        y += dy;
        prev = sigma;
        raw.push((x, y, arc_heading(m, sigma)));
    }
    // Midpoint pose, integrated separately so odd point counts work too.
    let half = 0.5 * m.length;
    let (mx, my) = arc_segment(m, 0.0, half);
    let mid = Pose2::new(mx, my, arc_heading(m, half)).to_transform();
    let frame = compose(
        &Transform2::new(PI / 2.0, nalgebra::Vector2::zeros()),
        &invert(&mid),
    );
    let desired = raw
        .into_iter()
        .map(|(x, y, t)| Pose2::from(compose(&frame, &Pose2::new(x, y, t).to_transform())))
        .collect();
    PathSpec::new(grid, desired)
}

pub fn write_path_file(path: &Path, spec: &PathSpec) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["s", "x", "y", "phi"])?;
    for (s, p) in spec.grid().s().iter().zip(spec.desired()) {
        w.write_record([fmt(*s), fmt(p.x), fmt(p.y), fmt(p.phi)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_path_file(path: &Path) -> Result<PathSpec> {
    #[derive(Deserialize)]
    struct Row {
        s: f64,
        x: f64,
        y: f64,
        phi: f64,
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut s = Vec::new();
    let mut desired = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        s.push(row.s);
        desired.push(Pose2::new(row.x, row.y, row.phi));
    }
    PathSpec::new(PathGrid::new(s)?, desired)
}

/// Shortest representation that parses back to the same double.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone)]
pub struct Initialization {
    pub theta: TrajectoryParams,
    /// Desired path including the tool offset.
    pub spec: PathSpec,
    pub q_b: [f64; 3],
    /// Per-point joint samples before fitting, `(N+1) × 6`.
    pub samples: DMatrix<f64>,
    pub fit_residual: f64,
    pub error_max: f64,
}

/// Joint trajectory that tracks `spec` turned by `phi0`: robot B holds the
/// part still and robot A follows the path by per-point inverse kinematics.
pub fn initialize(
    sys: &DualArmSystem,
    basis: PolyBasis,
    spec: &PathSpec,
    b_tool: &Pose2,
    phi0: f64,
    branches: (ElbowBranch, ElbowBranch),
) -> Result<Initialization> {
    if !phi0.is_finite() {
        return Err(Error::NonFinite("initial tool angle"));
    }
    let spec = spec.with_tool_offset(phi0);
    let (branch_a, branch_b) = branches;
    let q_b = sys
        .arm_b
        .inverse_kinematics(b_tool, branch_b)
        .map_err(|e| Error::UnreachablePoint {
            index: spec.len() / 2,
            arm: "B",
            source: Box::new(e),
        })?;
    let t_b = sys.arm_b.forward_kinematics(&q_b).to_transform();
    let to_a = compose(&invert(&sys.base_transform), &t_b);

    let n = spec.len();
    let mut samples = DMatrix::zeros(n, NUM_JOINTS);
    let mut prev: Option<[f64; 3]> = None;
    for (i, chi) in spec.desired().iter().enumerate() {
        let target = Pose2::from(compose(&to_a, &chi.to_transform()));
        let mut q_a = sys
            .arm_a
            .inverse_kinematics(&target, branch_a)
            .map_err(|e| Error::UnreachablePoint {
                index: i,
                arm: "A",
                source: Box::new(e),
            })?;
        if let Some(p) = prev {
            for j in 0..3 {
                q_a[j] = p[j] + wrap(q_a[j] - p[j]);
            }
        }
        prev = Some(q_a);
        for j in 0..3 {
            samples[(i, j)] = q_b[j];
            samples[(i, 3 + j)] = q_a[j];
        }
    }
    let table = basis.table(spec.grid());
    let fit = fit_theta(&table, &samples)?;
    let error_max = path_error::max_error(sys, &table, &fit.params, &spec)?;
    Ok(Initialization {
        theta: fit.params,
        spec,
        q_b,
        samples,
        fit_residual: fit.residual,
        error_max,
    })
}

/// Outcome of one solve, ready to be written out.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub phi0: f64,
    pub mode: SolveMode,
    pub init: Initialization,
    pub problem: Problem,
    pub report: SolverReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mode: SolveMode,
    pub phi0: f64,
    pub status: SolveStatus,
    pub final_time: f64,
    pub s_dot: f64,
    pub v: f64,
    pub error_max: f64,
    pub error_p: f64,
    pub iterations: usize,
    pub incumbent_iteration: usize,
    pub initial_final_time: f64,
    pub initial_error_max: f64,
    pub fit_residual: f64,
    pub wall_time: f64,
}

impl RunOutcome {
    pub fn metrics(&self) -> RunMetrics {
        let r = &self.report;
        RunMetrics {
            mode: self.mode,
            phi0: self.phi0,
            status: r.status,
            final_time: r.final_time(),
            s_dot: r.s_dot(),
            v: r.best.record.v,
            error_max: r.best.record.error_max,
            error_p: r.best.record.error_p,
            iterations: r.iterations,
            incumbent_iteration: r.best.iteration,
            initial_final_time: r.initial.final_time,
            initial_error_max: r.initial.error_max,
            fit_residual: self.init.fit_residual,
            wall_time: r.wall_time,
        }
    }

    /// Pointwise error of the reported trajectory against the desired path.
    pub fn pointwise_errors(&self) -> Vec<f64> {
        let table = self.problem.table();
        let spec = self.problem.spec();
        (0..spec.len())
            .map(|i| {
                let q = path_error::joint_vector_at(table, self.report.theta(), i);
                let actual = self.problem.system().relative_fk(&q);
                let d = spec.desired()[i];
                let w = spec.orientation_weight();
                let e = nalgebra::Vector3::new(
                    d.x - actual.x,
                    d.y - actual.y,
                    w * wrap(d.phi - actual.phi),
                );
                e.norm()
            })
            .collect()
    }
}

/// Initializes from `phi0` and solves in `mode`.
pub fn run_single(cfg: &ScenarioConfig, phi0: f64, mode: SolveMode) -> Result<RunOutcome> {
    let sys = cfg.system()?;
    let basis = cfg.basis();
    let spec = cfg.path_spec()?;
    let init = initialize(
        &sys,
        basis,
        &spec,
        &cfg.b_tool_pose(),
        phi0,
        (cfg.branch_a, cfg.branch_b),
    )?;
    let problem = Problem::new(sys, basis, init.spec.clone())?.for_mode(mode)?;
    let config = SolverConfig {
        mode,
        ..cfg.solver.clone()
    };
    let report = solver::solve(&problem, init.theta.clone(), config)?;
    Ok(RunOutcome {
        phi0,
        mode,
        init,
        problem,
        report,
    })
}

pub fn write_trajectory_csv(path: &Path, run: &RunOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "i", "s", "q_B1", "q_B2", "q_B3", "q_A1", "q_A2", "q_A3", "x", "y", "phi", "xd", "yd",
        "phid", "error",
    ])?;
    let table = run.problem.table();
    let spec = run.problem.spec();
    let errors = run.pointwise_errors();
    for i in 0..spec.len() {
        let q = path_error::joint_vector_at(table, run.report.theta(), i);
        let chi = run.problem.system().relative_fk(&q);
        let d = spec.desired()[i];
        let mut rec = vec![i.to_string(), fmt(spec.grid().s()[i])];
        rec.extend(q.0.iter().map(|v| fmt(*v)));
        rec.extend([chi.x, chi.y, chi.phi, d.x, d.y, d.phi, errors[i]].map(fmt));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_iterations_csv(path: &Path, report: &SolverReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iteration",
        "v",
        "s_dot",
        "final_time",
        "error_p",
        "error_max",
        "lambda",
    ])?;
    for r in &report.log {
        w.write_record([
            r.iteration.to_string(),
            fmt(r.v),
            fmt(r.s_dot),
            fmt(r.final_time),
            fmt(r.error_p),
            fmt(r.error_max),
            fmt(r.lambda),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_metrics_json(path: &Path, metrics: &RunMetrics) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(metrics)? + "\n"))
}

/// One polyline of the error plot.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub s: &'a [f64],
    pub values: &'a [f64],
}

/// Line plot of pointwise error against `s`. Each polyline carries its raw
/// values in a `data-values` attribute.
pub fn error_plot_svg(title: &str, series: &[Series<'_>]) -> String {
    use std::fmt::Write;
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 70.0, 20.0, 40.0, 50.0);
    let ymax = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0_f64, f64::max)
        .max(1e-12)
        * 1.05;
    let px = |s: f64| left + s * (w - left - right);
    let py = |v: f64| h - bottom - v / ymax * (h - top - bottom);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{title}</text>"#,
        w / 2.0
    );
    let _ = writeln!(
        out,
        r#"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        l = left,
        t = top,
        b = h - bottom,
        r = w - right
    );
    for k in 0..=4 {
        let v = ymax * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{:.2}</text>"#,
            left - 6.0,
            py(v) + 4.0,
            v * 1e3
        );
        let s = k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{s}</text>"#,
            px(s),
            h - bottom + 16.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">s</text>"#,
        w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">error [mm]</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .s
            .iter()
            .zip(ser.values)
            .map(|(&s, &v)| format!("{:.3},{:.3}", px(s), py(v)))
            .collect();
        let raw: Vec<String> = ser.values.iter().map(|v| fmt(*v)).collect();
        let _ = writeln!(
            out,
            r#"<polyline data-label="{}" data-values="{}" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            ser.label,
            raw.join(" "),
            pts.join(" "),
            ser.color
        );
        let ly = top + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/><text x="{}" y="{}" font-size="12">{}</text>"#,
            w - right - 110.0,
            w - right - 90.0,
            ser.color,
            w - right - 84.0,
            ly + 4.0,
            ser.label
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes trajectory, metrics and iteration log of one run into `dir`.
pub fn write_run(dir: &Path, run: &RunOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_trajectory_csv(&dir.join("trajectory.csv"), run)?;
    write_metrics_json(&dir.join("metrics.json"), &run.metrics())?;
    write_iterations_csv(&dir.join("iterations.csv"), &run.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub label: String,
    pub mode: SolveMode,
    pub phi0: Option<f64>,
    pub status: String,
    pub final_time: Option<f64>,
    pub runtime: Option<f64>,
    pub error_max: Option<f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rows: Vec<AggregateRow>,
}

impl Aggregate {
    pub fn runs(&self, mode: SolveMode) -> impl Iterator<Item = &AggregateRow> {
        self.rows
            .iter()
            .filter(move |r| r.mode == mode && r.phi0.is_some())
    }

    pub fn summary(&self, mode: SolveMode, label: &str) -> Option<&AggregateRow> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.label == label)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(rows: &[AggregateRow], mode: SolveMode) -> [AggregateRow; 2] {
    let ok: Vec<&AggregateRow> = rows
        .iter()
        .filter(|r| r.mode == mode && r.final_time.is_some())
        .collect();
    let col = |f: fn(&AggregateRow) -> Option<f64>| -> (Option<f64>, Option<f64>) {
        let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
        if v.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&v);
            (Some(m), Some(s))
        }
    };
    let (tf, tf_s) = col(|r| r.final_time);
    let (rt, rt_s) = col(|r| r.runtime);
    let (em, em_s) = col(|r| r.error_max);
    let row = |label: &str, final_time, runtime, error_max| AggregateRow {
        label: label.into(),
        mode,
        phi0: None,
        status: format!(
            "{} of {} runs",
            ok.len(),
            rows.iter().filter(|r| r.mode == mode).count()
        ),
        final_time,
        runtime,
        error_max,
        message: None,
    };
    [row("mean", tf, rt, em), row("std", tf_s, rt_s, em_s)]
}

/// Result of [`run_experiment`]: the aggregate plus each run (or its error).
pub struct Experiment {
    pub aggregate: Aggregate,
    pub runs: Vec<(f64, SolveMode, Result<RunOutcome>)>,
}

/// Solves every initial angle in single-arm and dual-arm mode. Failed runs
/// are recorded in the aggregate and do not stop the others.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<Experiment> {
    cfg.validate()?;
    let modes = [SolveMode::Single, SolveMode::Dual];
    let jobs: Vec<(f64, SolveMode)> = cfg
        .phi_inits
        .iter()
        .flat_map(|&p| modes.map(|m| (p, m)))
        .collect();
    let exec = cfg.solver.execution;
    let results = exec.map_jobs(jobs.len(), |k| run_single(cfg, jobs[k].0, jobs[k].1));
    let runs: Vec<_> = jobs
        .into_iter()
        .zip(results)
        .map(|((p, m), r)| (p, m, r))
        .collect();

    let mut rows = Vec::new();
    for mode in modes {
        for (k, (phi0, _, r)) in runs.iter().enumerate().filter(|(_, (_, m, _))| *m == mode) {
            let label = format!("run{}", k / 2);
            rows.push(match r {
                Ok(run) => {
                    let m = run.metrics();
                    AggregateRow {
                        label,
                        mode,
                        phi0: Some(*phi0),
                        status: serde_json::to_value(m.status)?
                            .as_str()
                            .unwrap_or_default()
                            .to_string(),
                        final_time: Some(m.final_time),
                        runtime: Some(m.wall_time),
                        error_max: Some(m.error_max),
                        message: None,
                    }
                }
                Err(e) => AggregateRow {
                    label,
                    mode,
                    phi0: Some(*phi0),
                    status: "error".into(),
                    final_time: None,
                    runtime: None,
                    error_max: None,
                    message: Some(e.to_string()),
                },
            });
        }
    }
    let summaries: Vec<AggregateRow> = modes.iter().flat_map(|&m| summarize(&rows, m)).collect();
    rows.extend(summaries);
    Ok(Experiment {
        aggregate: Aggregate { rows },
        runs,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn write_aggregate(dir: &Path, agg: &Aggregate) -> Result<()> {
    let path = dir.join("aggregate.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "label",
        "mode",
        "phi0",
        "status",
        "final_time",
        "runtime",
        "error_max",
        "message",
    ])?;
    for r in &agg.rows {
        w.write_record([
            r.label.clone(),
            r.mode.to_string(),
            opt(r.phi0),
            r.status.clone(),
            opt(r.final_time),
            opt(r.runtime),
            opt(r.error_max),
            r.message.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_text(
        &dir.join("aggregate.json"),
        &(serde_json::to_string_pretty(agg)? + "\n"),
    )
}

/// Writes every run directory, one error plot per initial angle and the
/// aggregate table.
pub fn write_experiment(dir: &Path, exp: &Experiment) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut by_init: Vec<Vec<(&RunOutcome, Vec<f64>)>> = Vec::new();
    for (k, (_, mode, r)) in exp.runs.iter().enumerate() {
        if k % 2 == 0 {
            by_init.push(Vec::new());
        }
        if let Ok(run) = r {
            write_run(&dir.join(format!("run{}_{}", k / 2, mode)), run)?;
            by_init
                .last_mut()
                .expect("pushed above")
                .push((run, run.pointwise_errors()));
        }
    }
    for (k, runs) in by_init.iter().enumerate() {
        let series: Vec<Series<'_>> = runs
            .iter()
            .map(|(run, e)| Series {
                label: if run.mode == SolveMode::Dual {
                    "dual-arm"
                } else {
                    "single-arm"
                },
                color: if run.mode == SolveMode::Dual {
                    "#1f77b4"
                } else {
                    "#d62728"
                },
                s: run.problem.spec().grid().s(),
                values: e,
            })
            .collect();
        if !series.is_empty() {
            let title = format!("Pointwise error, run {k} (phi0 = {})", runs[0].0.phi0);
            write_text(
                &dir.join(format!("run{k}_error.svg")),
                &error_plot_svg(&title, &series),
            )?;
        }
    }
    write_aggregate(dir, &exp.aggregate)
}

/// Parses the values embedded in an error plot, keyed by series label.
pub fn plot_values(svg: &str) -> Vec<(String, Vec<f64>)> {
    let attr = |line: &str, name: &str| -> Option<String> {
        let key = format!("{name}=\"");
        let start = line.find(&key)? + key.len();
        let end = line[start..].find('"')? + start;
        Some(line[start..end].to_string())
    };
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .filter_map(|l| {
            let label = attr(l, "data-label")?;
            let values = attr(l, "data-values")?
                .split_whitespace()
                .map(|v| v.parse().ok())
                .collect::<Option<Vec<f64>>>()?;
            Some((label, values))
        })
        .collect()
}

/// Joint vector of the reported trajectory at grid point `i`.
pub fn joints_at(run: &RunOutcome, i: usize) -> JointVector {
    path_error::joint_vector_at(run.problem.table(), run.report.theta(), i)
}

/// Draws `count` tool angles uniformly in `[0, 2π)`.
pub fn random_phi_inits(seed: u64, count: usize) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_json().unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg: ScenarioConfig =
            serde_json::from_str(r#"{"points": 100, "solver": {"max_iters": 5}}"#).unwrap();
        assert_eq!(cfg.points, 100);
        assert_eq!(cfg.solver.max_iters, 5);
        assert_eq!(cfg.solver.eta_theta, 1e-5);
        assert_eq!(cfg.arm_a.link_lengths, [2.0, 1.5, 1.0]);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"pointz": 3}"#).is_err());
    }

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.arm_a.velocity_limits, [1.75, 1.57, 1.0]);
        assert_eq!(cfg.arm_b.acceleration_limits, [35.0, 31.4, 20.0]);
        assert_eq!(cfg.base_offset, [4.0, 0.0]);
        assert_eq!(cfg.points, 500);
        assert_eq!(cfg.basis_degree, 9);
        assert_eq!(cfg.solver.max_iters, 2000);
        assert_eq!(cfg.solver.eta_dual, 0.5);
        assert_eq!(cfg.solver.epsilon, 1e-5);
        assert_eq!(cfg.phi_inits, vec![5.12, 0.0, 1.04, 0.56, 4.76]);
    }

    #[test]
    fn two_point_path_is_the_arc_endpoints() {
        let m = MockPath::default();
        let two = mock_fanblade_path(&m, 1).unwrap();
        let many = mock_fanblade_path(&m, 10).unwrap();
        assert_eq!(two.len(), 2);
        for (a, b) in [(0, 0), (1, 10)] {
            let (p, q) = (two.desired()[a], many.desired()[b]);
            assert!(
                (p.x - q.x).abs() < 1e-11
                    && (p.y - q.y).abs() < 1e-11
                    && (p.phi - q.phi).abs() < 1e-12
            );
        }
    }

    #[test]
    fn midpoint_sits_at_origin_heading_up() {
        let spec = mock_fanblade_path(&MockPath::default(), 100).unwrap();
        let mid = spec.desired()[50];
        assert!(mid.x.abs() < 1e-11 && mid.y.abs() < 1e-11);
        assert!((mid.phi - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn spacing_is_uniform_in_arc_length() {
        // Chord lengths of a fine resampling approach the arc length.
        let m = MockPath::default();
        let spec = mock_fanblade_path(&m, 499).unwrap();
        let d = spec.desired();
        let gaps: Vec<f64> = d
            .windows(2)
            .map(|w| (w[1].position() - w[0].position()).norm())
            .collect();
        let expected = m.length / 499.0;
        for g in &gaps {
            assert!((g - expected).abs() / expected < 0.01);
        }
        let total: f64 = gaps.iter().sum();
        assert!((total - m.length).abs() < 1e-5);
    }

    #[test]
    fn orientation_follows_tangent() {
        let spec = mock_fanblade_path(&MockPath::default(), 999).unwrap();
        let d = spec.desired();
        for i in 1..d.len() - 1 {
            let t = d[i + 1].position() - d[i - 1].position();
            let heading = t.y.atan2(t.x);
            assert!(wrap(heading - d[i].phi).abs() < 1e-5);
        }
    }

    #[test]
    fn default_inits_are_reachable_and_b_is_static() {
        let mut cfg = ScenarioConfig::default();
        cfg.points = 100;
        let sys = cfg.system().unwrap();
        let spec = cfg.path_spec().unwrap();
        for &phi0 in &cfg.phi_inits {
            let init = initialize(
                &sys,
                cfg.basis(),
                &spec,
                &cfg.b_tool_pose(),
                phi0,
                (cfg.branch_a, cfg.branch_b),
            )
            .unwrap();
            assert!(init.error_max < 2e-3, "phi0 {phi0}: {}", init.error_max);
            for j in 0..3 {
                let row = init.theta.joint(j);
                assert!(row[1..].iter().all(|c| c.abs() < 1e-9));
            }
        }
    }

    #[test]
    fn unreachable_points_are_named() {
        let mut cfg = ScenarioConfig::default();
        cfg.points = 20;
        cfg.base_offset = [20.0, 0.0];
        let sys = cfg.system().unwrap();
        let spec = cfg.path_spec().unwrap();
        let err = initialize(
            &sys,
            cfg.basis(),
            &spec,
            &cfg.b_tool_pose(),
            0.0,
            (cfg.branch_a, cfg.branch_b),
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::UnreachablePoint {
                    index: 0,
                    arm: "A",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn path_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = mock_fanblade_path(&MockPath::default(), 30).unwrap();
        let path = dir.path().join("p.csv");
        write_path_file(&path, &spec).unwrap();
        assert_eq!(read_path_file(&path).unwrap(), spec);
    }

    #[test]
    fn plot_values_round_trip() {
        let s = [0.0, 0.5, 1.0];
        let v = [1e-3, 0.1 + 0.2, 2.5e-7];
        let svg = error_plot_svg(
            "t",
            &[Series {
                label: "dual-arm",
                color: "blue",
                s: &s,
                values: &v,
            }],
        );
        assert_eq!(
            plot_values(&svg),
            vec![("dual-arm".to_string(), v.to_vec())]
        );
    }
}
