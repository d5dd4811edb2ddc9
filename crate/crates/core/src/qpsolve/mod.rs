//! Convex quadratic programs
//!
//! ```text
//! minimize   ½ xᵀQx + cᵀx + constant
//! subject to A_eq x = b_eq,  l_in ≤ A_in x ≤ u_in,  lower ≤ x ≤ upper
//! ```
//!
//! solved by an alternating-direction operator-splitting method with
//! equilibration, adaptive penalty and a final active-set polish.

mod admm;
mod csc;
mod ldl;

use alloc::vec;
use alloc::vec::Vec;

pub use csc::CscMatrix;

use crate::math;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch in {0}")]
    Dimension(&'static str),
    #[error("entry ({row}, {col}) outside a {nrows}x{ncols} matrix")]
    OutOfRange { row: usize, col: usize, nrows: usize, ncols: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("quadratic term is not symmetric")]
    NotSymmetric,
    #[error("quadratic term has negative curvature")]
    NotConvex,
    #[error("invalid solver settings: {0}")]
    Settings(&'static str),
    #[error("linear system factorization failed at pivot {0}")]
    Factorization(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Problem data. `q` is stored in full (both triangles).
#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub q: CscMatrix,
    pub c: Vec<f64>,
    pub constant: f64,
    pub a_eq: CscMatrix,
    pub b_eq: Vec<f64>,
    pub a_in: CscMatrix,
    pub in_lower: Vec<f64>,
    pub in_upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QpProblem {
    /// Zero objective, no constraints, free variables.
    pub fn new(n: usize) -> Self {
        QpProblem {
            q: CscMatrix::zeros(n, n),
            c: vec![0.0; n],
            constant: 0.0,
            a_eq: CscMatrix::zeros(0, n),
            b_eq: Vec::new(),
            a_in: CscMatrix::zeros(0, n),
            in_lower: Vec::new(),
            in_upper: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// Rows of the stacked constraint matrix: equalities, inequalities,
    /// then one row per variable bound. Dual vectors use this layout.
    pub fn stacked_rows(&self) -> usize {
        self.a_eq.nrows() + self.a_in.nrows() + self.n()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut qx = vec![0.0; self.n()];
        self.q.mul_vec(x, &mut qx);
        let quad: f64 = qx.iter().zip(x).map(|(a, b)| a * b).sum();
        let lin: f64 = self.c.iter().zip(x).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.constant
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        if self.q.nrows() != n || self.q.ncols() != n {
            return Err(QpError::Dimension("quadratic term"));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err(QpError::Dimension("equality constraints"));
        }
        if self.a_in.ncols() != n
            || self.a_in.nrows() != self.in_lower.len()
            || self.a_in.nrows() != self.in_upper.len()
        {
            return Err(QpError::Dimension("inequality constraints"));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(QpError::Dimension("variable bounds"));
        }
        if !self.q.is_finite() || !self.c.iter().all(|v| v.is_finite()) || !self.constant.is_finite() {
            return Err(QpError::NonFinite("objective"));
        }
        if !self.a_eq.is_finite() || !self.b_eq.iter().all(|v| v.is_finite()) {
            return Err(QpError::NonFinite("equality constraints"));
        }
        if !self.a_in.is_finite() {
            return Err(QpError::NonFinite("inequality constraints"));
        }
        let nan = |v: &[f64]| v.iter().any(|x| x.is_nan());
        if nan(&self.in_lower) || nan(&self.in_upper) || nan(&self.lower) || nan(&self.upper) {
            return Err(QpError::NonFinite("bounds"));
        }
        if !self.q.is_symmetric(1e-12) {
            return Err(QpError::NotSymmetric);
        }
        Ok(())
    }

    /// Stacked `(A, l, u)`.
    pub fn stacked(&self) -> (CscMatrix, Vec<f64>, Vec<f64>) {
        let n = self.n();
        let a = CscMatrix::vstack(&[&self.a_eq, &self.a_in, &CscMatrix::identity(n)]);
        let mut l = Vec::with_capacity(a.nrows());
        let mut u = Vec::with_capacity(a.nrows());
        l.extend_from_slice(&self.b_eq);
        u.extend_from_slice(&self.b_eq);
        l.extend_from_slice(&self.in_lower);
        u.extend_from_slice(&self.in_upper);
        l.extend_from_slice(&self.lower);
        u.extend_from_slice(&self.upper);
        (a, l, u)
    }
}

/// Incremental construction of a [`QpProblem`].
#[derive(Clone, Debug, Default)]
pub struct QpBuilder {
    lower: Vec<f64>,
    upper: Vec<f64>,
    c: Vec<f64>,
    constant: f64,
    q: Vec<(usize, usize, f64)>,
    eq: Vec<(usize, usize, f64)>,
    b_eq: Vec<f64>,
    ineq: Vec<(usize, usize, f64)>,
    in_lower: Vec<f64>,
    in_upper: Vec<f64>,
}

impl QpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.c.push(0.0);
        self.c.len() - 1
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    /// Adds `v` to `Q[i][j]` and, off the diagonal, to `Q[j][i]`.
    pub fn add_hessian(&mut self, i: usize, j: usize, v: f64) {
        self.q.push((i, j, v));
        if i != j {
            self.q.push((j, i, v));
        }
    }

    pub fn add_linear(&mut self, j: usize, v: f64) {
        self.c[j] += v;
    }

    pub fn add_constant(&mut self, v: f64) {
        self.constant += v;
    }

    pub fn add_eq(&mut self, terms: &[(usize, f64)], rhs: f64) -> usize {
        let r = self.b_eq.len();
        self.eq.extend(terms.iter().map(|&(j, v)| (r, j, v)));
        self.b_eq.push(rhs);
        r
    }

    pub fn add_ineq(&mut self, terms: &[(usize, f64)], lower: f64, upper: f64) -> usize {
        let r = self.in_lower.len();
        self.ineq.extend(terms.iter().map(|&(j, v)| (r, j, v)));
        self.in_lower.push(lower);
        self.in_upper.push(upper);
        r
    }

    pub fn build(self) -> Result<QpProblem, QpError> {
        let n = self.n();
        Ok(QpProblem {
            q: CscMatrix::from_triplets(n, n, &self.q)?,
            c: self.c,
            constant: self.constant,
            a_eq: CscMatrix::from_triplets(self.b_eq.len(), n, &self.eq)?,
            b_eq: self.b_eq,
            a_in: CscMatrix::from_triplets(self.in_lower.len(), n, &self.ineq)?,
            in_lower: self.in_lower,
            in_upper: self.in_upper,
            lower: self.lower,
            upper: self.upper,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub scaling_iter: usize,
    /// Residuals are checked and the penalty adapted every this many iterations.
    pub check_interval: usize,
    /// Penalty changes smaller than this factor do not trigger a refactorization.
    pub rho_refactor_ratio: f64,
    /// Iterations the infeasibility certificate must persist.
    pub infeasibility_window: usize,
    pub eps_infeasible: f64,
    pub polish: bool,
    pub polish_refine_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iter: 10,
            check_interval: 25,
            rho_refactor_ratio: 5.0,
            infeasibility_window: 1000,
            eps_infeasible: 1e-5,
            polish: true,
            polish_refine_iter: 3,
        }
    }
}

impl QpSettings {
    pub fn with_tolerances(eps_abs: f64, eps_rel: f64, max_iter: usize) -> Self {
        QpSettings { eps_abs, eps_rel, max_iter, ..Default::default() }
    }

    fn validate(&self) -> Result<(), QpError> {
        if !(self.eps_abs > 0.0 && self.eps_rel >= 0.0) {
            return Err(QpError::Settings("tolerances must be positive"));
        }
        if self.max_iter == 0 || self.check_interval == 0 {
            return Err(QpError::Settings("iteration limits must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(QpError::Settings("relaxation factor outside (0, 2)"));
        }
        if !(self.rho > 0.0 && self.sigma > 0.0) {
            return Err(QpError::Settings("penalties must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Duals in stacked-row order (see [`QpProblem::stacked_rows`]); positive
    /// on active upper bounds, negative on active lower bounds.
    pub y: Vec<f64>,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective_value: f64,
    pub iterations: usize,
    pub polished: bool,
}

/// Solves the problem. Infeasibility and iteration exhaustion are reported
/// through [`QpSolution::status`]; malformed input is an error.
pub fn solve_qp(prob: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    settings.validate()?;
    prob.validate()?;
    check_convex(&prob.q)?;
    admm::solve(prob, settings)
}

/// Rejects a quadratic term with negative curvature: `Q + εI` must factor
/// with strictly positive pivots.
fn check_convex(q: &CscMatrix) -> Result<(), QpError> {
    let n = q.ncols();
    if n == 0 {
        return Ok(());
    }
    let scale = q.values().iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
    if scale == 0.0 {
        return Ok(());
    }
    let shift = 1e-9 * scale;
    let mut cp = vec![0usize];
    let mut ri = Vec::new();
    let mut vx = Vec::new();
    for j in 0..n {
        let mut diag = shift;
        for (i, v) in q.col(j) {
            if i < j {
                ri.push(i);
                vx.push(v);
            } else if i == j {
                diag += v;
            }
        }
        ri.push(j);
        vx.push(diag);
        cp.push(ri.len());
    }
    let sym = ldl::Symbolic::analyse(n, &cp, &ri);
    match sym.factor(&vx) {
        Ok(f) if f.positive_pivots() == n => Ok(()),
        _ => Err(QpError::NotConvex),
    }
}

/// KKT residual norms at `(x, y)` with `y` in stacked-row order:
/// stationarity `‖Qx + c + Aᵀy‖∞`, primal distance of `Ax` to `[l, u]`, and
/// complementarity `max_i max(min(y⁺, u − Ax), min(y⁻, Ax − l))` where an
/// infinite bound makes the matching dual sign itself the violation.
pub fn kkt_residuals(prob: &QpProblem, x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = prob.n();
    assert_eq!(x.len(), n, "primal vector length");
    assert_eq!(y.len(), prob.stacked_rows(), "dual vector length");
    let (a, l, u) = prob.stacked();
    let mut r = vec![0.0; n];
    prob.q.mul_vec(x, &mut r);
    let mut aty = vec![0.0; n];
    a.mul_t_vec(y, &mut aty);
    for j in 0..n {
        r[j] += prob.c[j] + aty[j];
    }
    let stationarity = math::norm_inf(&r);

    let mut ax = vec![0.0; a.nrows()];
    a.mul_vec(x, &mut ax);
    let mut primal = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..a.nrows() {
        let below = l[i] - ax[i];
        let above = ax[i] - u[i];
        primal = primal.max(below).max(above);
        let yp = y[i].max(0.0);
        let ym = (-y[i]).max(0.0);
        let su = if u[i].is_finite() { math::abs(u[i] - ax[i]) } else { f64::INFINITY };
        let sl = if l[i].is_finite() { math::abs(ax[i] - l[i]) } else { f64::INFINITY };
        comp = comp.max(yp.min(su)).max(ym.min(sl));
    }
    (stationarity, primal.max(0.0), comp)
}

#[cfg(test)]
mod tests;
