use super::*;
use proptest::prelude::*;

fn settings() -> QpSettings {
    QpSettings::default()
}

fn two_var_equality() -> QpProblem {
    // (x-3)² + (y-2)² = ½ xᵀ(2I)x - 6x - 4y + 13
    let mut b = QpBuilder::new();
    let x = b.add_var(f64::NEG_INFINITY, f64::INFINITY);
    let y = b.add_var(f64::NEG_INFINITY, f64::INFINITY);
    b.add_hessian(x, x, 2.0);
    b.add_hessian(y, y, 2.0);
    b.add_linear(x, -6.0);
    b.add_linear(y, -4.0);
    b.add_constant(13.0);
    b.add_eq(&[(x, 1.0), (y, 1.0)], 4.0);
    b.build().unwrap()
}

#[test]
fn square_with_lower_bound() {
    let mut b = QpBuilder::new();
    let x = b.add_var(1.0, f64::INFINITY);
    b.add_hessian(x, x, 2.0);
    let p = b.build().unwrap();
    let s = solve_qp(&p, &settings()).unwrap();
    assert_eq!(s.status, QpStatus::Optimal);
    assert!((s.x[0] - 1.0).abs() < 1e-6);
    assert!((s.objective_value - 1.0).abs() < 1e-6);
}

#[test]
fn equality_constrained_projection() {
    let p = two_var_equality();
    let s = solve_qp(&p, &settings()).unwrap();
    assert_eq!(s.status, QpStatus::Optimal);
    assert!((s.x[0] - 2.5).abs() < 1e-6, "{:?}", s.x);
    assert!((s.x[1] - 1.5).abs() < 1e-6, "{:?}", s.x);
    assert!((s.objective_value - 0.5).abs() < 1e-6);
    let (st, pr, co) = kkt_residuals(&p, &s.x, &s.y);
    assert!(st < 1e-6 && pr < 1e-6 && co < 1e-6);
}

#[test]
fn contradictory_rows_are_infeasible() {
    let mut b = QpBuilder::new();
    let x = b.add_var(f64::NEG_INFINITY, f64::INFINITY);
    b.add_hessian(x, x, 2.0);
    b.add_ineq(&[(x, 1.0)], 2.0, f64::INFINITY);
    b.add_ineq(&[(x, 1.0)], f64::NEG_INFINITY, 1.0);
    let s = solve_qp(&b.build().unwrap(), &settings()).unwrap();
    assert_eq!(s.status, QpStatus::Infeasible);
}

#[test]
fn crossed_variable_bounds_are_infeasible() {
    let mut b = QpBuilder::new();
    b.add_var(2.0, 1.0);
    let s = solve_qp(&b.build().unwrap(), &settings()).unwrap();
    assert_eq!(s.status, QpStatus::Infeasible);
}

#[test]
fn linear_program_with_bounds() {
    // min -x - y  s.t. x + 2y <= 4, 0 <= x <= 3, y >= 0  ->  x = 3, y = 0.5
    let mut b = QpBuilder::new();
    let x = b.add_var(0.0, 3.0);
    let y = b.add_var(0.0, f64::INFINITY);
    b.add_linear(x, -1.0);
    b.add_linear(y, -1.0);
    b.add_ineq(&[(x, 1.0), (y, 2.0)], f64::NEG_INFINITY, 4.0);
    let s = solve_qp(&b.build().unwrap(), &settings()).unwrap();
    assert_eq!(s.status, QpStatus::Optimal);
    assert!((s.x[0] - 3.0).abs() < 1e-6 && (s.x[1] - 0.5).abs() < 1e-6, "{:?}", s.x);
}

#[test]
fn exact_optimum_has_zero_residuals() {
    let p = two_var_equality();
    let x = [2.5, 1.5];
    let y = [1.0, 0.0, 0.0];
    let (st, pr, co) = kkt_residuals(&p, &x, &y);
    assert!(st < 1e-9 && pr < 1e-9 && co < 1e-9);
    let (st, _, _) = kkt_residuals(&p, &[2.6, 1.5], &y);
    assert!(st > 0.0);
}

#[test]
fn unconstrained_minimum_at_origin() {
    let mut b = QpBuilder::new();
    let x = b.add_var(f64::NEG_INFINITY, f64::INFINITY);
    b.add_hessian(x, x, 2.0);
    let p = b.build().unwrap();
    assert_eq!(kkt_residuals(&p, &[0.0], &[0.0]), (0.0, 0.0, 0.0));
    let s = solve_qp(&p, &settings()).unwrap();
    assert_eq!(s.status, QpStatus::Optimal);
    assert!(s.x[0].abs() < 1e-9);
}

#[test]
fn negative_curvature_is_rejected() {
    let mut b = QpBuilder::new();
    let x = b.add_var(-1.0, 1.0);
    let y = b.add_var(-1.0, 1.0);
    b.add_hessian(x, x, 1.0);
    b.add_hessian(y, y, 1.0);
    b.add_hessian(x, y, 2.0);
    assert_eq!(solve_qp(&b.build().unwrap(), &settings()), Err(QpError::NotConvex));
}

#[test]
fn singular_psd_term_is_accepted() {
    // (x - y)² with x + y = 2, x <= 0.5 -> x = 0.5, y = 1.5
    let mut b = QpBuilder::new();
    let x = b.add_var(f64::NEG_INFINITY, 0.5);
    let y = b.add_var(f64::NEG_INFINITY, f64::INFINITY);
    b.add_hessian(x, x, 2.0);
    b.add_hessian(y, y, 2.0);
    b.add_hessian(x, y, -2.0);
    b.add_eq(&[(x, 1.0), (y, 1.0)], 2.0);
    let s = solve_qp(&b.build().unwrap(), &settings()).unwrap();
    assert_eq!(s.status, QpStatus::Optimal);
    assert!((s.x[0] - 0.5).abs() < 1e-6 && (s.x[1] - 1.5).abs() < 1e-6);
}

#[test]
fn asymmetric_term_is_rejected() {
    let mut p = QpProblem::new(2);
    p.q = CscMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
    assert_eq!(solve_qp(&p, &settings()), Err(QpError::NotSymmetric));
}

#[test]
fn dimension_errors() {
    let mut p = QpProblem::new(2);
    p.c.push(1.0);
    assert!(matches!(solve_qp(&p, &settings()), Err(QpError::Dimension(_))));
    assert!(matches!(
        solve_qp(&QpProblem::new(1), &QpSettings { eps_abs: 0.0, ..settings() }),
        Err(QpError::Settings(_))
    ));
}

#[test]
fn deterministic() {
    let p = two_var_equality();
    assert_eq!(solve_qp(&p, &settings()).unwrap(), solve_qp(&p, &settings()).unwrap());
}

/// Problem with a planted optimum: `Q = MᵀM + 0.1 I`, rows either active with
/// a positive multiplier or slack, and `c` chosen so KKT holds at `x*`.
#[derive(Clone, Debug)]
struct Planted {
    prob: QpProblem,
    x_star: Vec<f64>,
}

fn planted() -> impl Strategy<Value = Planted> {
    (2usize..7)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(-1.0f64..1.0, n * n),
                prop::collection::vec(-3.0f64..3.0, n),
                prop::collection::vec((prop::collection::vec(-2.0f64..2.0, n), 0u8..3, 0.1f64..2.0), 0..6),
            )
        })
        .prop_map(|(n, m, x_star, rows)| {
            let mut b = QpBuilder::new();
            for _ in 0..n {
                b.add_var(f64::NEG_INFINITY, f64::INFINITY);
            }
            let mut q = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut s = if i == j { 0.1 } else { 0.0 };
                    for k in 0..n {
                        s += m[k * n + i] * m[k * n + j];
                    }
                    q[i * n + j] = s;
                }
            }
            for i in 0..n {
                for j in i..n {
                    b.add_hessian(i, j, q[i * n + j]);
                }
            }
            let mut grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i * n + j] * x_star[j]).sum()).collect();
            for (a, kind, mag) in rows {
                let ax: f64 = a.iter().zip(&x_star).map(|(p, q)| p * q).sum();
                let terms: Vec<(usize, f64)> = a.iter().copied().enumerate().collect();
                let y = match kind {
                    0 => {
                        b.add_ineq(&terms, f64::NEG_INFINITY, ax);
                        mag
                    }
                    1 => {
                        b.add_ineq(&terms, ax, ax + 5.0);
                        -mag
                    }
                    _ => {
                        b.add_ineq(&terms, ax - mag, ax + mag);
                        0.0
                    }
                };
                for (g, p) in grad.iter_mut().zip(&a) {
                    *g += y * p;
                }
            }
            for (j, g) in grad.iter().enumerate() {
                b.add_linear(j, -g);
            }
            Planted { prob: b.build().unwrap(), x_star }
        })
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs())) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recovers_planted_optimum(pl in planted()) {
        let s = solve_qp(&pl.prob, &settings()).unwrap();
        prop_assert_eq!(s.status, QpStatus::Optimal);
        prop_assert!(rel_err(&s.x, &pl.x_star) < 1e-5, "x = {:?}, x* = {:?}", s.x, pl.x_star);
    }

    #[test]
    fn no_feasible_sample_beats_solution(pl in planted(), dirs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 8)) {
        let s = solve_qp(&pl.prob, &settings()).unwrap();
        let n = pl.prob.n();
        for d in dirs {
            let cand: Vec<f64> = pl.x_star.iter().zip(&d).map(|(x, v)| x + 0.5 * v).collect();
            let cand = &cand[..n];
            let (_, infeas, _) = kkt_residuals(&pl.prob, cand, &vec![0.0; pl.prob.stacked_rows()]);
            if infeas == 0.0 {
                prop_assert!(s.objective_value <= pl.prob.objective(cand) + 1e-6 * (1.0 + s.objective_value.abs()));
            }
        }
    }

    #[test]
    fn scaling_objective_keeps_argmin(pl in planted(), alpha in 0.05f64..20.0) {
        let base = solve_qp(&pl.prob, &settings()).unwrap();
        let mut scaled = pl.prob.clone();
        let trip: Vec<(usize, usize, f64)> = scaled.q.triplets().into_iter().map(|(i, j, v)| (i, j, v * alpha)).collect();
        scaled.q = CscMatrix::from_triplets(scaled.n(), scaled.n(), &trip).unwrap();
        scaled.c.iter_mut().for_each(|v| *v *= alpha);
        let s = solve_qp(&scaled, &settings()).unwrap();
        prop_assert_eq!(s.status, QpStatus::Optimal);
        prop_assert!(rel_err(&s.x, &base.x) < 1e-5);
        let expect = alpha * base.objective_value;
        prop_assert!((s.objective_value - expect).abs() <= 1e-5 * (1.0 + expect.abs()));
    }
}
