//! Polynomial joint trajectories over the normalized path parameter `s`.
//!
//! Joint `j` follows `q_j(s) = p(s)·θ_j` where `p(s)` is a row of `d` basis
//! functions. Coefficients are stored joint-major: `[θ_1, θ_2, …]`, each of
//! length `d`, in the same `[B; A]` joint order as [`JointVector`].
//!
//! [`JointVector`]: crate::chain::JointVector

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// `1, s, s², …` on `[0, 1]`.
    #[default]
    Monomial,
    /// Legendre polynomials of `2s - 1`.
    ShiftedLegendre,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyBasis {
    pub degree: usize,
    pub kind: BasisKind,
}

impl Default for PolyBasis {
    fn default() -> Self {
        Self::monomial(9)
    }
}

/// Basis row and its first two derivatives at one `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRow {
    pub p: Vec<f64>,
    pub dp: Vec<f64>,
    pub ddp: Vec<f64>,
}

impl PolyBasis {
    pub fn monomial(degree: usize) -> Self {
        Self {
            degree,
            kind: BasisKind::Monomial,
        }
    }

    pub fn legendre(degree: usize) -> Self {
        Self {
            degree,
            kind: BasisKind::ShiftedLegendre,
        }
    }

    /// Number of coefficients per joint.
    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn row(&self, s: f64) -> BasisRow {
        let d = self.dim();
        let mut p = vec![0.0; d];
        let mut dp = vec![0.0; d];
        let mut ddp = vec![0.0; d];
        match self.kind {
            BasisKind::Monomial => {
                // s^k, k s^(k-1), k(k-1) s^(k-2)
                let mut pow = vec![1.0; d];
                for k in 1..d {
                    pow[k] = pow[k - 1] * s;
                }
                for k in 0..d {
                    let kf = k as f64;
                    p[k] = pow[k];
                    if k >= 1 {
                        dp[k] = kf * pow[k - 1];
                    }
                    if k >= 2 {
                        ddp[k] = kf * (kf - 1.0) * pow[k - 2];
                    }
                }
            }
            BasisKind::ShiftedLegendre => {
                let x = 2.0 * s - 1.0;
                // P_{k+1} = ((2k+1) x P_k - k P_{k-1}) / (k+1)
                // P'_{k+1} = P'_{k-1} + (2k+1) P_k, same pattern one order up.
                let mut lp = vec![0.0; d];
                let mut ld = vec![0.0; d];
                let mut ldd = vec![0.0; d];
                lp[0] = 1.0;
                if d > 1 {
                    lp[1] = x;
                    ld[1] = 1.0;
                }
                for k in 1..d.saturating_sub(1) {
                    let kf = k as f64;
                    lp[k + 1] = ((2.0 * kf + 1.0) * x * lp[k] - kf * lp[k - 1]) / (kf + 1.0);
                    ld[k + 1] = ld[k - 1] + (2.0 * kf + 1.0) * lp[k];
                    ldd[k + 1] = ldd[k - 1] + (2.0 * kf + 1.0) * ld[k];
                }
                for k in 0..d {
                    p[k] = lp[k];
                    dp[k] = 2.0 * ld[k];
                    ddp[k] = 4.0 * ldd[k];
                }
            }
        }
        BasisRow { p, dp, ddp }
    }

    /// Precomputes the basis rows on every grid point.
    pub fn table(&self, grid: &PathGrid) -> BasisTable {
        let n = grid.len();
        let d = self.dim();
        let mut p = DMatrix::zeros(n, d);
        let mut dp = DMatrix::zeros(n, d);
        let mut ddp = DMatrix::zeros(n, d);
        for (i, &s) in grid.s().iter().enumerate() {
            let r = self.row(s);
            for k in 0..d {
                p[(i, k)] = r.p[k];
                dp[(i, k)] = r.dp[k];
                ddp[(i, k)] = r.ddp[k];
            }
        }
        BasisTable { p, dp, ddp }
    }
}

/// Path-parameter grid `s_0 = 0 < s_1 < … < s_N = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PathGrid {
    s: Vec<f64>,
}

impl PathGrid {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        if s.len() < 2 {
            return Err(Error::InvalidConfig(
                "grid needs at least two points".into(),
            ));
        }
        if s[0] != 0.0 || *s.last().unwrap() != 1.0 {
            return Err(Error::InvalidConfig(
                "grid must start at 0 and end at 1".into(),
            ));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig(
                "grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { s })
    }

    /// `points` uniformly spaced values from 0 to 1 inclusive.
    pub fn uniform(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidConfig(
                "grid needs at least two points".into(),
            ));
        }
        let last = (points - 1) as f64;
        Self::new((0..points).map(|i| i as f64 / last).collect())
    }

    /// Single-point grid; only used to probe pointwise quantities.
    #[cfg(test)]
    pub(crate) fn single(s: f64) -> Self {
        Self { s: vec![s] }
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

impl TryFrom<Vec<f64>> for PathGrid {
    type Error = Error;

    fn try_from(s: Vec<f64>) -> Result<Self> {
        Self::new(s)
    }
}

impl From<PathGrid> for Vec<f64> {
    fn from(g: PathGrid) -> Self {
        g.s
    }
}

/// Basis rows `p_i`, `p'_i`, `p''_i` stacked as `(N+1) × d` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTable {
    pub p: DMatrix<f64>,
    pub dp: DMatrix<f64>,
    pub ddp: DMatrix<f64>,
}

impl BasisTable {
    pub fn points(&self) -> usize {
        self.p.nrows()
    }

    pub fn dim(&self) -> usize {
        self.p.ncols()
    }
}

#[inline]
pub(crate) fn row_dot(m: &DMatrix<f64>, i: usize, theta: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (k, t) in theta.iter().enumerate() {
        acc += m[(i, k)] * t;
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    joints: usize,
    dim: usize,
    coeffs: Vec<f64>,
}

impl TrajectoryParams {
    pub fn zeros(joints: usize, dim: usize) -> Self {
        Self {
            joints,
            dim,
            coeffs: vec![0.0; joints * dim],
        }
    }

    pub fn from_flat(joints: usize, dim: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != joints * dim {
            return Err(Error::DimensionMismatch {
                context: "trajectory coefficients",
                expected: joints * dim,
                actual: coeffs.len(),
            });
        }
        Ok(Self {
            joints,
            dim,
            coeffs,
        })
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn flat(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn joint(&self, j: usize) -> &[f64] {
        &self.coeffs[j * self.dim..(j + 1) * self.dim]
    }

    pub fn joint_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.coeffs[j * self.dim..(j + 1) * self.dim]
    }

    /// Stacks two parameter sets joint-wise, `self` first.
    pub fn stack(&self, other: &TrajectoryParams) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                context: "stacked basis dimension",
                expected: self.dim,
                actual: other.dim,
            });
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.extend_from_slice(&other.coeffs);
        Ok(Self {
            joints: self.joints + other.joints,
            dim: self.dim,
            coeffs,
        })
    }

    pub(crate) fn check_table(&self, table: &BasisTable) -> Result<()> {
        if table.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "basis dimension",
                expected: table.dim(),
                actual: self.dim,
            });
        }
        Ok(())
    }

    /// `q_j(s_i)` for a single grid index.
    pub fn joints_at(&self, table: &BasisTable, i: usize) -> Vec<f64> {
        (0..self.joints)
            .map(|j| row_dot(&table.p, i, self.joint(j)))
            .collect()
    }
}

fn eval_with(m: &DMatrix<f64>, theta: &TrajectoryParams) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), theta.joints(), |i, j| {
        row_dot(m, i, theta.joint(j))
    })
}

/// Joint positions, one row per grid point.
pub fn eval_q(table: &BasisTable, theta: &TrajectoryParams) -> Result<DMatrix<f64>> {
    theta.check_table(table)?;
    Ok(eval_with(&table.p, theta))
}

/// `dq/ds` on the grid; multiply by ṡ for joint velocities.
pub fn eval_qprime(table: &BasisTable, theta: &TrajectoryParams) -> Result<DMatrix<f64>> {
    theta.check_table(table)?;
    Ok(eval_with(&table.dp, theta))
}

/// `d²q/ds²` on the grid; multiply by ṡ² for joint accelerations.
pub fn eval_qdoubleprime(table: &BasisTable, theta: &TrajectoryParams) -> Result<DMatrix<f64>> {
    theta.check_table(table)?;
    Ok(eval_with(&table.ddp, theta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: TrajectoryParams,
    /// Largest absolute residual over all grid points and joints.
    pub residual: f64,
}

/// Per-joint least-squares fit of `samples` (`(N+1) × n`) via SVD.
pub fn fit_theta(table: &BasisTable, samples: &DMatrix<f64>) -> Result<FitResult> {
    let (rows, d) = (table.points(), table.dim());
    if samples.nrows() != rows {
        return Err(Error::DimensionMismatch {
            context: "fit samples",
            expected: rows,
            actual: samples.nrows(),
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fit samples"));
    }
    if rows < d {
        return Err(Error::RankDeficient {
            rank: rows,
            required: d,
        });
    }
    let svd = table.p.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-13 * rows.max(d) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < d {
        return Err(Error::RankDeficient { rank, required: d });
    }
    let sol = svd
        .solve(samples, tol)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let n = samples.ncols();
    let mut coeffs = Vec::with_capacity(n * d);
    for j in 0..n {
        coeffs.extend(sol.column(j).iter());
    }
    let params = TrajectoryParams::from_flat(n, d, coeffs)?;
    let fitted = eval_with(&table.p, &params);
    let residual = (fitted - samples).abs().max();
    Ok(FitResult { params, residual })
}

/// `(I_n ⊗ p) θ` with `p` a single basis row, i.e. all joint values at once.
pub fn kron_eval(p: &[f64], theta: &TrajectoryParams) -> DVector<f64> {
    let n = theta.joints();
    let d = theta.dim();
    let mut k = DMatrix::zeros(n, n * d);
    for j in 0..n {
        for (c, &v) in p.iter().enumerate() {
            k[(j, j * d + c)] = v;
        }
    }
    k * DVector::from_column_slice(theta.flat())
}
