//! Upper-level primal-dual subgradient method.
//!
//! The Lagrangian of the upper-level problem is
//!
//! ```text
//! L(θ, λ, μ, ν) = V(θ) + λ (E(θ) - ε)
//!               + Σ_ij μ_ij (p_i θ_j - q̄_j) - Σ_ij ν_ij (p_i θ_j - q̲_j)
//! ```
//!
//! Each iteration takes a subgradient step on `θ` followed by a projected
//! ascent step on the multipliers. Subgradient iterations are not monotone,
//! so the best feasible iterate seen so far is kept as the incumbent.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::arm::JointLimits;
use crate::chain::{DualArmSystem, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lower_level::{evaluate_v_with, validate_limits, LowerLevelResult};
use crate::path_error::{self, PathErrorEval, PathSpec};
use crate::trajectory::{eval_q, BasisTable, PolyBasis, TrajectoryParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// Both arms move.
    #[default]
    Dual,
    /// Robot B is frozen and the orientation about the tool is free.
    Single,
}

impl std::fmt::Display for SolveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveMode::Dual => "dual",
            SolveMode::Single => "single",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub eta_theta: f64,
    pub eta_dual: f64,
    /// Path-error target inside the Lagrangian.
    pub epsilon: f64,
    pub max_iters: usize,
    pub mode: SolveMode,
    pub seed: u64,
    /// Max pointwise error an iterate may have to become the incumbent.
    pub feasibility_tol: f64,
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta_theta: 1e-5,
            eta_dual: 0.5,
            epsilon: 1e-5,
            max_iters: 2000,
            mode: SolveMode::Dual,
            seed: 0,
            feasibility_tol: 5e-3,
            execution: Execution::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_theta > 0.0 && self.eta_dual > 0.0) {
            return Err(Error::InvalidConfig("step sizes must be positive".into()));
        }
        if !(self.epsilon >= 0.0) || !(self.feasibility_tol >= 0.0) {
            return Err(Error::InvalidConfig(
                "tolerances must be non-negative".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// The fixed data of one solve: robots, basis and desired path.
#[derive(Debug, Clone)]
pub struct Problem {
    system: DualArmSystem,
    basis: PolyBasis,
    spec: PathSpec,
    table: BasisTable,
    limits: [JointLimits; NUM_JOINTS],
}

impl Problem {
    pub fn new(system: DualArmSystem, basis: PolyBasis, spec: PathSpec) -> Result<Self> {
        let limits = system.joint_limits();
        validate_limits(&limits)?;
        let table = basis.table(spec.grid());
        Ok(Self {
            system,
            basis,
            spec,
            table,
            limits,
        })
    }

    pub fn system(&self) -> &DualArmSystem {
        &self.system
    }

    pub fn basis(&self) -> PolyBasis {
        self.basis
    }

    pub fn spec(&self) -> &PathSpec {
        &self.spec
    }

    pub fn table(&self) -> &BasisTable {
        &self.table
    }

    pub fn limits(&self) -> &[JointLimits] {
        &self.limits
    }

    /// The problem as posed for `mode`; single-arm mode ignores orientation.
    pub fn for_mode(&self, mode: SolveMode) -> Result<Problem> {
        match mode {
            SolveMode::Dual => Ok(self.clone()),
            SolveMode::Single => {
                let spec = self.spec.clone().with_orientation_weight(0.0)?;
                Ok(Problem {
                    spec,
                    ..self.clone()
                })
            }
        }
    }
}

/// Multipliers and iterate of the primal-dual method.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub theta: TrajectoryParams,
    pub lambda: f64,
    /// Upper position-limit multipliers, `(N+1) × n`.
    pub mu: DMatrix<f64>,
    /// Lower position-limit multipliers, `(N+1) × n`.
    pub nu: DMatrix<f64>,
}

impl SolverState {
    pub fn new(theta: TrajectoryParams, points: usize) -> Self {
        let n = theta.joints();
        Self {
            theta,
            lambda: 0.0,
            mu: DMatrix::zeros(points, n),
            nu: DMatrix::zeros(points, n),
        }
    }
}

/// Quantities derived from one `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub lower: LowerLevelResult,
    pub path: PathErrorEval,
    /// `p_i θ_j`, one row per grid point.
    pub positions: DMatrix<f64>,
}

pub fn evaluate(
    problem: &Problem,
    theta: &TrajectoryParams,
    exec: Execution,
) -> Result<Evaluation> {
    let lower = evaluate_v_with(exec, &problem.limits, &problem.table, theta)?;
    let path = path_error::evaluate(
        exec,
        &problem.system,
        &problem.table,
        theta,
        &problem.spec,
        true,
    )?;
    let positions = eval_q(&problem.table, theta)?;
    Ok(Evaluation {
        lower,
        path,
        positions,
    })
}

/// Value of the Lagrangian at `state`, given the evaluation of `state.theta`.
pub fn lagrangian(
    problem: &Problem,
    config: &SolverConfig,
    state: &SolverState,
    eval: &Evaluation,
) -> f64 {
    let mut value = eval.lower.value + state.lambda * (eval.path.total - config.epsilon);
    for j in 0..state.theta.joints() {
        let b = problem.limits[j].position;
        for i in 0..eval.positions.nrows() {
            let q = eval.positions[(i, j)];
            value += state.mu[(i, j)] * (q - b.upper) - state.nu[(i, j)] * (q - b.lower);
        }
    }
    value
}

/// Subgradient of the Lagrangian w.r.t. the flattened `θ`.
pub fn lagrangian_subgradient(
    problem: &Problem,
    config: &SolverConfig,
    state: &SolverState,
    eval: &Evaluation,
) -> Vec<f64> {
    let d = state.theta.dim();
    let mut g = eval.lower.subgradient.clone();
    let grad_e = eval
        .path
        .gradient
        .as_ref()
        .expect("solver evaluations carry ∇E");
    for (gi, ge) in g.iter_mut().zip(grad_e) {
        *gi += state.lambda * ge;
    }
    let p = &problem.table.p;
    for j in 0..state.theta.joints() {
        let block = &mut g[j * d..(j + 1) * d];
        for i in 0..p.nrows() {
            let w = state.mu[(i, j)] - state.nu[(i, j)];
            if w != 0.0 {
                for (k, b) in block.iter_mut().enumerate() {
                    *b += w * p[(i, k)];
                }
            }
        }
    }
    if config.mode == SolveMode::Single {
        g[..3 * d].fill(0.0);
    }
    g
}

/// One logged iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iteration: usize,
    pub v: f64,
    pub s_dot: f64,
    pub final_time: f64,
    pub error_p: f64,
    pub error_max: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub iteration: usize,
    pub theta: TrajectoryParams,
    pub record: IterateRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// The incumbent satisfies the path-error tolerance.
    Feasible,
    /// No iterate met the tolerance; the reported trajectory is the one
    /// with the smallest max error.
    NoFeasibleIterate,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub status: SolveStatus,
    pub best: Incumbent,
    pub initial: IterateRecord,
    pub log: Vec<IterateRecord>,
    pub iterations: usize,
    pub wall_time: f64,
}

impl SolverReport {
    pub fn theta(&self) -> &TrajectoryParams {
        &self.best.theta
    }

    pub fn final_time(&self) -> f64 {
        self.best.record.final_time
    }

    pub fn s_dot(&self) -> f64 {
        self.best.record.s_dot
    }
}

pub struct Solver {
    problem: Problem,
    config: SolverConfig,
    state: SolverState,
    current: Evaluation,
}

impl Solver {
    pub fn new(problem: &Problem, init: TrajectoryParams, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        if init.joints() != NUM_JOINTS || init.dim() != problem.basis.dim() {
            return Err(Error::DimensionMismatch {
                context: "initial coefficients",
                expected: NUM_JOINTS * problem.basis.dim(),
                actual: init.flat().len(),
            });
        }
        let problem = problem.for_mode(config.mode)?;
        let current = evaluate(&problem, &init, config.execution)?;
        let state = SolverState::new(init, problem.spec.len());
        Ok(Self {
            problem,
            config,
            state,
            current,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SolverState {
        &mut self.state
    }

    pub fn current(&self) -> &Evaluation {
        &self.current
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn lagrangian(&self) -> f64 {
        lagrangian(&self.problem, &self.config, &self.state, &self.current)
    }

    /// Replaces the iterate and re-evaluates it.
    pub fn set_theta(&mut self, theta: TrajectoryParams) -> Result<()> {
        self.current = evaluate(&self.problem, &theta, self.config.execution)?;
        self.state.theta = theta;
        Ok(())
    }

    /// `θ ← θ - η_θ g` with `g` a subgradient of the Lagrangian.
    pub fn primal_step(&mut self) -> Result<()> {
        let g = lagrangian_subgradient(&self.problem, &self.config, &self.state, &self.current);
        let mut theta = self.state.theta.clone();
        for (t, gi) in theta.flat_mut().iter_mut().zip(&g) {
            *t -= self.config.eta_theta * gi;
        }
        self.set_theta(theta)
    }

    /// Projected ascent on the multipliers at the current iterate.
    pub fn dual_step(&mut self) {
        let eta = self.config.eta_dual;
        let st = &mut self.state;
        st.lambda = (st.lambda + eta * (self.current.path.total - self.config.epsilon)).max(0.0);
        let pos = &self.current.positions;
        for j in 0..st.theta.joints() {
            let b = self.problem.limits[j].position;
            for i in 0..pos.nrows() {
                let q = pos[(i, j)];
                st.mu[(i, j)] = (st.mu[(i, j)] + eta * (q - b.upper)).max(0.0);
                st.nu[(i, j)] = (st.nu[(i, j)] + eta * (b.lower - q)).max(0.0);
            }
        }
    }

    fn record(&self, iteration: usize) -> IterateRecord {
        let l = &self.current.lower;
        IterateRecord {
            iteration,
            v: l.value,
            s_dot: l.s_dot,
            final_time: l.final_time(),
            error_p: self.current.path.total,
            error_max: self.current.path.max,
            lambda: self.state.lambda,
        }
    }

    /// Runs `max_iters` primal/dual iterations and reports the incumbent.
    pub fn run(mut self) -> Result<SolverReport> {
        let start = Instant::now();
        let tol = self.config.feasibility_tol;
        let mut log = Vec::with_capacity(self.config.max_iters + 1);
        let mut best: Option<Incumbent> = None;
        let mut fallback: Option<Incumbent> = None;

        for k in 0..=self.config.max_iters {
            let rec = self.record(k);
            log.push(rec);
            if rec.error_max <= tol && best.as_ref().is_none_or(|b| rec.v < b.record.v) {
                best = Some(Incumbent {
                    iteration: k,
                    theta: self.state.theta.clone(),
                    record: rec,
                });
            }
            if best.is_none()
                && fallback
                    .as_ref()
                    .is_none_or(|b| rec.error_max < b.record.error_max)
            {
                fallback = Some(Incumbent {
                    iteration: k,
                    theta: self.state.theta.clone(),
                    record: rec,
                });
            }
            if k == self.config.max_iters {
                break;
            }
            self.primal_step()?;
            self.dual_step();
        }

        let (status, best) = match best {
            Some(b) => (SolveStatus::Feasible, b),
            None => (
                SolveStatus::NoFeasibleIterate,
                fallback.expect("at least one iterate is logged"),
            ),
        };
        Ok(SolverReport {
            status,
            best,
            initial: log[0],
            iterations: self.config.max_iters,
            log,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }
}

pub fn solve(
    problem: &Problem,
    init: TrajectoryParams,
    config: SolverConfig,
) -> Result<SolverReport> {
    Solver::new(problem, init, config)?.run()
}
