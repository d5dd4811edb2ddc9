use alloc::vec;
use alloc::vec::Vec;

use super::ldl::{Factor, Symbolic};
use super::{CscMatrix, QpError, QpProblem, QpSettings, QpSolution, QpStatus};
use crate::math;

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const POLISH_DELTA: f64 = 1e-7;
// Active-set duals of the wrong sign beyond this fraction of the largest one
// reject the polish.
const POLISH_SIGN_REL: f64 = 1e-6;
// A polished point may not raise the objective by more than this.
const POLISH_OBJ_REL: f64 = 1e-5;
const TINY: f64 = 1e-30;
const KKT_REFINE: usize = 1;
// Iterations between polish attempts while iterating.
const POLISH_EVERY: usize = 100;
// Active-set corrections per polish attempt.
const POLISH_ROUNDS: usize = 12;
// Share of the largest multiplier above which a conflicting row is released.
const POLISH_RELEASE: f64 = 0.1;
// Inactive rows violated by more than this join the active set.
const POLISH_VIOLATION: f64 = 1e-9;
// Active rows missed by more than this mark the active set inconsistent.
const POLISH_UNMET: f64 = 1e-6;
/// Polished multipliers this far beyond the ADMM ones come from a
/// near-singular active set and make the dual check meaningless.
const POLISH_DUAL_GROWTH: f64 = 1e3;

/// Equilibrated copy of the problem: `P̄ = c D P D`, `q̄ = c D q`, `Ā = E A D`.
struct Scaled {
    n: usize,
    m: usize,
    p: CscMatrix,
    q: Vec<f64>,
    a: CscMatrix,
    at: CscMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    cost: f64,
}

fn inv_sqrt_norm(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        1.0 / math::sqrt(v.min(MAX_SCALING))
    }
}

fn scale_problem(prob: &QpProblem, iters: usize) -> Scaled {
    let n = prob.n();
    let (mut a, l, u) = prob.stacked();
    let m = a.nrows();
    let mut p = prob.q.clone();
    let mut q = prob.c.clone();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let mut cost = 1.0;
    for _ in 0..iters {
        let pn = p.col_norms_inf();
        let an = a.col_norms_inf();
        let ar = a.row_norms_inf();
        let dx: Vec<f64> = (0..n).map(|j| inv_sqrt_norm(pn[j].max(an[j]))).collect();
        let dz: Vec<f64> = ar.iter().map(|&v| inv_sqrt_norm(v)).collect();
        p.scale(&dx, &dx);
        a.scale(&dz, &dx);
        for j in 0..n {
            q[j] *= dx[j];
            d[j] *= dx[j];
        }
        for i in 0..m {
            e[i] *= dz[i];
        }
        let pn = p.col_norms_inf();
        let mean = if n > 0 { pn.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let s = mean.max(math::norm_inf(&q));
        let gamma = if s < MIN_SCALING { 1.0 } else { 1.0 / s.min(MAX_SCALING) };
        p.values_mut().iter_mut().for_each(|v| *v *= gamma);
        q.iter_mut().for_each(|v| *v *= gamma);
        cost *= gamma;
    }
    let l = l.iter().zip(&e).map(|(v, s)| v * s).collect();
    let u = u.iter().zip(&e).map(|(v, s)| v * s).collect();
    let at = a.transpose();
    Scaled { n, m, p, q, a, at, l, u, d, e, cost }
}

fn is_eq(l: f64, u: f64) -> bool {
    l.is_finite() && u - l <= 1e-12 * (1.0 + math::abs(l))
}

fn rho_for_row(rho: f64, l: f64, u: f64) -> f64 {
    if l == f64::NEG_INFINITY && u == f64::INFINITY {
        RHO_MIN
    } else if is_eq(l, u) {
        (rho * RHO_EQ_FACTOR).min(RHO_MAX)
    } else {
        rho
    }
}

/// Upper-triangular pattern and values of `[P + σI, Aᵀ; A, -diag(1/ρ)]`,
/// with the positions of the lower-right diagonal.
struct Kkt {
    sym: Symbolic,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    lower_diag: Vec<usize>,
    factor: Factor,
}

impl Kkt {
    /// `ordering`, when given, is used instead of a fresh minimum-degree
    /// ordering of the `n + m` unknowns.
    fn build(
        p: &CscMatrix,
        at: &CscMatrix,
        upper_shift: f64,
        lower_diag: &[f64],
        ordering: Option<Vec<usize>>,
    ) -> Result<Kkt, QpError> {
        let n = p.ncols();
        let m = at.ncols();
        let mut cp = Vec::with_capacity(n + m + 1);
        let mut ri = Vec::new();
        let mut vx = Vec::new();
        cp.push(0);
        for j in 0..n {
            let mut diag = upper_shift;
            for (i, v) in p.col(j) {
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
        let mut pos = Vec::with_capacity(m);
        for i in 0..m {
            for (j, v) in at.col(i) {
                ri.push(j);
                vx.push(v);
            }
            pos.push(ri.len());
            ri.push(n + i);
            vx.push(lower_diag[i]);
            cp.push(ri.len());
        }
        let sym = match ordering {
            Some(perm) => Symbolic::with_ordering(n + m, &cp, &ri, perm),
            None => Symbolic::analyse(n + m, &cp, &ri),
        };
        let factor = sym.factor(&vx).map_err(QpError::Factorization)?;
        Ok(Kkt { sym, col_ptr: cp, row_idx: ri, values: vx, lower_diag: pos, factor })
    }

    fn update_lower_diag(&mut self, diag: &[f64]) -> Result<(), QpError> {
        for (k, &p) in self.lower_diag.iter().enumerate() {
            self.values[p] = diag[k];
        }
        self.factor = self.sym.factor(&self.values).map_err(QpError::Factorization)?;
        Ok(())
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..x.len() {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let (i, v) = (self.row_idx[p], self.values[p]);
                out[i] += v * x[j];
                if i != j {
                    out[j] += v * x[i];
                }
            }
        }
    }

    /// Solves in place without refinement; ADMM absorbs the small error.
    fn solve_once(&self, b: &mut [f64], work: &mut [f64]) {
        self.factor.solve(&self.sym, b, work);
    }

    /// Solves in place with `KKT_REFINE` steps of iterative refinement.
    fn solve(&self, b: &mut [f64], work: &mut [f64]) {
        let rhs = b.to_vec();
        self.factor.solve(&self.sym, b, work);
        let mut r = vec![0.0; b.len()];
        for _ in 0..KKT_REFINE {
            self.mul(b, &mut r);
            r.iter_mut().zip(&rhs).for_each(|(v, t)| *v = t - *v);
            self.factor.solve(&self.sym, &mut r, work);
            b.iter_mut().zip(&r).for_each(|(v, d)| *v += d);
        }
    }
}

/// Residuals of a scaled iterate, both unscaled (for termination) and
/// scaled (for the penalty update).
struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    prim_ratio: f64,
    dual_ratio: f64,
}

fn residuals(sc: &Scaled, x: &[f64], z: &[f64], y: &[f64], eps_abs: f64, eps_rel: f64) -> Residuals {
    let mut ax = vec![0.0; sc.m];
    sc.a.mul_vec(x, &mut ax);
    let mut px = vec![0.0; sc.n];
    sc.p.mul_vec(x, &mut px);
    let mut aty = vec![0.0; sc.n];
    sc.at.mul_vec(y, &mut aty);

    let (mut prim, mut ax_n, mut z_n) = (0.0f64, 0.0f64, 0.0f64);
    let (mut prim_s, mut ax_s, mut z_s) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..sc.m {
        let ei = 1.0 / sc.e[i];
        let r = math::abs(ax[i] - z[i]);
        prim = prim.max(r * ei);
        ax_n = ax_n.max(math::abs(ax[i]) * ei);
        z_n = z_n.max(math::abs(z[i]) * ei);
        prim_s = prim_s.max(r);
        ax_s = ax_s.max(math::abs(ax[i]));
        z_s = z_s.max(math::abs(z[i]));
    }
    let ci = 1.0 / sc.cost;
    let (mut dual, mut px_n, mut aty_n, mut q_n) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut dual_s, mut px_s, mut aty_s, mut q_s) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for j in 0..sc.n {
        let di = ci / sc.d[j];
        let r = math::abs(px[j] + sc.q[j] + aty[j]);
        dual = dual.max(r * di);
        px_n = px_n.max(math::abs(px[j]) * di);
        aty_n = aty_n.max(math::abs(aty[j]) * di);
        q_n = q_n.max(math::abs(sc.q[j]) * di);
        dual_s = dual_s.max(r);
        px_s = px_s.max(math::abs(px[j]));
        aty_s = aty_s.max(math::abs(aty[j]));
        q_s = q_s.max(math::abs(sc.q[j]));
    }
    Residuals {
        prim,
        dual,
        eps_prim: eps_abs + eps_rel * ax_n.max(z_n),
        eps_dual: eps_abs + eps_rel * px_n.max(aty_n).max(q_n),
        prim_ratio: prim_s / (ax_s.max(z_s) + TINY),
        dual_ratio: dual_s / (px_s.max(aty_s).max(q_s) + TINY),
    }
}

/// Tests `δy` for a primal infeasibility certificate: `Aᵀδy ≈ 0` and
/// `uᵀδy⁺ + lᵀδy⁻ < 0`.
fn certifies_infeasibility(sc: &Scaled, dy: &[f64], eps: f64) -> bool {
    let norm = dy.iter().zip(&sc.e).fold(0.0f64, |m, (v, e)| m.max(math::abs(v * e)));
    if norm < 1e-12 {
        return false;
    }
    let mut support = 0.0;
    for i in 0..sc.m {
        if dy[i] > 0.0 {
            if sc.u[i] == f64::INFINITY {
                return false;
            }
            support += sc.u[i] * dy[i];
        } else if dy[i] < 0.0 {
            if sc.l[i] == f64::NEG_INFINITY {
                return false;
            }
            support += sc.l[i] * dy[i];
        }
    }
    if support >= -eps * norm {
        return false;
    }
    let mut atdy = vec![0.0; sc.n];
    sc.at.mul_vec(dy, &mut atdy);
    atdy.iter().zip(&sc.d).all(|(v, d)| math::abs(v / d) <= eps * norm)
}

fn project(v: f64, l: f64, u: f64) -> f64 {
    v.max(l).min(u)
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Active {
    Lower,
    Upper,
    Fixed,
}

/// Solves the equality-constrained problem on the guessed active set.
/// Solves the equality-constrained QP on `rows` by proximal-point steps
/// from `(x0, y)`; multipliers of dependent rows stay near their start.
fn solve_active(
    sc: &Scaled,
    full_perm: &[usize],
    x0: &[f64],
    y: &[f64],
    rows: &[(usize, Active)],
    steps: usize,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = sc.n;
    let k = rows.len();
    let idx: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let ar = sc.a.select_rows(&idx);
    let art = ar.transpose();
    // the reduced system is a principal submatrix of the full one, whose
    // ordering restricted to the kept unknowns fills no more than it did
    let mut keep = vec![usize::MAX; n + sc.m];
    for j in 0..n {
        keep[j] = j;
    }
    for (t, &i) in idx.iter().enumerate() {
        keep[n + i] = n + t;
    }
    let perm: Vec<usize> = full_perm.iter().map(|&o| keep[o]).filter(|&r| r != usize::MAX).collect();
    let kkt = Kkt::build(&sc.p, &art, POLISH_DELTA, &vec![-POLISH_DELTA; k], Some(perm)).ok()?;
    let b: Vec<f64> = rows
        .iter()
        .map(|&(i, kind)| match kind {
            Active::Lower => sc.l[i],
            _ => sc.u[i],
        })
        .collect();
    let mut sol: Vec<f64> = x0.iter().copied().chain(idx.iter().map(|&i| y[i])).collect();
    let mut rhs = vec![0.0; n + k];
    let mut work = vec![0.0; n + k];
    for _ in 0..steps.max(1) {
        for j in 0..n {
            rhs[j] = POLISH_DELTA * sol[j] - sc.q[j];
        }
        for t in 0..k {
            rhs[n + t] = b[t] - POLISH_DELTA * sol[n + t];
        }
        kkt.solve(&mut rhs, &mut work);
        sol.copy_from_slice(&rhs);
    }
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let yk = sol.split_off(n);
    Some((sol, yk))
}

/// Guesses the active set from the ADMM iterate and refines it with a few
/// primal active-set corrections, returning an exact KKT point on success.
fn polish(
    sc: &Scaled,
    full_perm: &[usize],
    x0: &[f64],
    z: &[f64],
    y: &[f64],
    steps: usize,
) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let m = sc.m;
    let mut state: Vec<Option<Active>> = (0..m)
        .map(|i| {
            if is_eq(sc.l[i], sc.u[i]) {
                Some(Active::Fixed)
            } else if z[i] - sc.l[i] < -y[i] {
                Some(Active::Lower)
            } else if sc.u[i] - z[i] < y[i] {
                Some(Active::Upper)
            } else {
                None
            }
        })
        .collect();
    let mut ax = vec![0.0; m];
    let mut seen: Vec<Vec<Option<Active>>> = Vec::new();
    for _ in 0..POLISH_ROUNDS {
        // cycling between sets means the guess cannot be repaired
        if seen.contains(&state) {
            return None;
        }
        seen.push(state.clone());
        let rows: Vec<(usize, Active)> = state.iter().enumerate().filter_map(|(i, s)| s.map(|k| (i, k))).collect();
        let (x, yk) = solve_active(sc, full_perm, x0, y, &rows, steps)?;
        let y_max = yk.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        sc.a.mul_vec(&x, &mut ax);
        // an inconsistent active set shows up as unmet rows with exploding
        // multipliers; release the inequalities carrying them
        let unmet = rows.iter().any(|&(i, kind)| {
            let b = if kind == Active::Lower { sc.l[i] } else { sc.u[i] };
            math::abs(ax[i] - b) > POLISH_UNMET * (1.0 + math::abs(b))
        });
        if unmet {
            let mut released = false;
            for (t, &(i, kind)) in rows.iter().enumerate() {
                if kind != Active::Fixed && math::abs(yk[t]) >= POLISH_RELEASE * y_max {
                    state[i] = None;
                    released = true;
                }
            }
            if !released {
                return None;
            }
            continue;
        }
        let sign_tol = POLISH_SIGN_REL * y_max.max(1.0);
        let mut changed = false;
        let mut yp = vec![0.0; m];
        for (t, &(i, kind)) in rows.iter().enumerate() {
            let v = yk[t];
            let wrong = match kind {
                Active::Lower => v > 0.0,
                Active::Upper => v < 0.0,
                Active::Fixed => false,
            };
            if wrong && v.abs() > sign_tol {
                state[i] = None;
                changed = true;
            } else if !wrong {
                yp[i] = v;
            }
        }
        if changed {
            continue;
        }
        for i in 0..m {
            if state[i].is_some() {
                continue;
            }
            if ax[i] < sc.l[i] - POLISH_VIOLATION * (1.0 + math::abs(sc.l[i])) {
                state[i] = Some(Active::Lower);
                changed = true;
            } else if ax[i] > sc.u[i] + POLISH_VIOLATION * (1.0 + math::abs(sc.u[i])) {
                state[i] = Some(Active::Upper);
                changed = true;
            }
        }
        if changed {
            continue;
        }
        let y_ref = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if y_max > POLISH_DUAL_GROWTH * y_ref {
            return None;
        }
        let zp = (0..m).map(|i| project(ax[i], sc.l[i], sc.u[i])).collect();
        return Some((x, zp, yp));
    }
    None
}

fn scaled_objective(sc: &Scaled, x: &[f64]) -> f64 {
    let mut px = vec![0.0; sc.n];
    sc.p.mul_vec(x, &mut px);
    x.iter().zip(&px).zip(&sc.q).map(|((xi, pi), qi)| 0.5 * xi * pi + qi * xi).sum()
}

fn trivially_infeasible(prob: &QpProblem, iterations: usize) -> QpSolution {
    QpSolution {
        x: vec![0.0; prob.n()],
        y: vec![0.0; prob.stacked_rows()],
        status: QpStatus::Infeasible,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        objective_value: f64::INFINITY,
        iterations,
        polished: false,
    }
}

pub(super) fn solve(prob: &QpProblem, st: &QpSettings) -> Result<QpSolution, QpError> {
    let sc = scale_problem(prob, st.scaling_iter);
    let (n, m) = (sc.n, sc.m);
    if (0..m).any(|i| sc.l[i] > sc.u[i]) {
        return Ok(trivially_infeasible(prob, 0));
    }

    let mut rho = st.rho;
    let mut rho_vec: Vec<f64> = (0..m).map(|i| rho_for_row(rho, sc.l[i], sc.u[i])).collect();
    let neg_inv = |r: &[f64]| r.iter().map(|v| -1.0 / v).collect::<Vec<f64>>();
    let mut kkt = Kkt::build(&sc.p, &sc.at, st.sigma, &neg_inv(&rho_vec), None)?;

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut y_prev = vec![0.0; m];
    let mut rhs = vec![0.0; n + m];
    let mut work = vec![0.0; n + m];
    let alpha = st.alpha;

    let mut status = QpStatus::MaxIter;
    let mut iter = 0;
    let mut cert_iters = 0usize;
    let mut res = residuals(&sc, &x, &z, &y, st.eps_abs, st.eps_rel);
    let mut polished = false;

    while iter < st.max_iter {
        iter += 1;
        let check = iter % st.check_interval == 0 || iter == st.max_iter;
        if check {
            y_prev.copy_from_slice(&y);
        }
        for j in 0..n {
            rhs[j] = st.sigma * x[j] - sc.q[j];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / rho_vec[i];
        }
        kkt.solve_once(&mut rhs, &mut work);
        for j in 0..n {
            x[j] = alpha * rhs[j] + (1.0 - alpha) * x[j];
        }
        for i in 0..m {
            let zt = z[i] + (rhs[n + i] - y[i]) / rho_vec[i];
            let zr = alpha * zt + (1.0 - alpha) * z[i];
            let zn = project(zr + y[i] / rho_vec[i], sc.l[i], sc.u[i]);
            y[i] += rho_vec[i] * (zr - zn);
            z[i] = zn;
        }
        if !check {
            continue;
        }

        res = residuals(&sc, &x, &z, &y, st.eps_abs, st.eps_rel);
        if res.prim <= res.eps_prim && res.dual <= res.eps_dual {
            status = QpStatus::Optimal;
            break;
        }
        // an identified active set often solves the problem long before
        // the iterates themselves converge
        if st.polish && iter % POLISH_EVERY == 0 {
            if let Some((xp, zp, yp)) = polish(&sc, kkt.sym.perm(), &x, &z, &y, st.polish_refine_iter) {
                let rp = residuals(&sc, &xp, &zp, &yp, st.eps_abs, st.eps_rel);
                if rp.prim <= rp.eps_prim && rp.dual <= rp.eps_dual {
                    x = xp;
                    y = yp;
                    res = rp;
                    polished = true;
                    status = QpStatus::Optimal;
                    break;
                }
            }
        }
        let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
        if certifies_infeasibility(&sc, &dy, st.eps_infeasible) {
            cert_iters += st.check_interval;
            if cert_iters >= st.infeasibility_window {
                status = QpStatus::Infeasible;
                break;
            }
        } else {
            cert_iters = 0;
        }

        let proposed = (rho * math::sqrt(res.prim_ratio / (res.dual_ratio + TINY))).clamp(RHO_MIN, RHO_MAX);
        if proposed > rho * st.rho_refactor_ratio || proposed < rho / st.rho_refactor_ratio {
            // half step in log space damps the penalty limit cycles
            rho = math::sqrt(rho * proposed).clamp(RHO_MIN, RHO_MAX);
            for i in 0..m {
                rho_vec[i] = rho_for_row(rho, sc.l[i], sc.u[i]);
            }
            kkt.update_lower_diag(&neg_inv(&rho_vec))?;
        }
    }

    if st.polish && !polished && status != QpStatus::Infeasible {
        if let Some((xp, zp, yp)) = polish(&sc, kkt.sym.perm(), &x, &z, &y, st.polish_refine_iter) {
            let rp = residuals(&sc, &xp, &zp, &yp, st.eps_abs, st.eps_rel);
            let prim_ok = rp.prim <= res.prim.max(rp.eps_prim);
            let dual_ok = rp.dual <= res.dual.max(rp.eps_dual);
            let f = |v: &[f64]| scaled_objective(&sc, v);
            let (fa, fp) = (f(&x), f(&xp));
            let obj_ok = fp <= fa + POLISH_OBJ_REL * (1.0 + fa.abs());
            if prim_ok && dual_ok && obj_ok {
                x = xp;
                y = yp;
                res = rp;
                polished = true;
                if res.prim <= res.eps_prim && res.dual <= res.eps_dual {
                    status = QpStatus::Optimal;
                }
            }
        }
    }

    let x_out: Vec<f64> = x.iter().zip(&sc.d).map(|(v, d)| v * d).collect();
    let y_out: Vec<f64> = y.iter().zip(&sc.e).map(|(v, e)| v * e / sc.cost).collect();
    let objective_value = prob.objective(&x_out);
    Ok(QpSolution {
        x: x_out,
        y: y_out,
        status,
        primal_residual: res.prim,
        dual_residual: res.dual,
        objective_value,
        iterations: iter,
        polished,
    })
}
