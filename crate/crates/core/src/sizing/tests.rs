use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::netmodel::{Bus, Line, PhaseSet, Source};
use crate::powerflow::{branch_losses, lin_flows, lin_voltages, Injection};
use crate::profiles::{DaySpec, ProfileRecord};
use crate::qpsolve::solve_qp;
use crate::storage::{check_cycle, check_limits, EssSpec};

fn feeder(lines: &[(BusId, BusId, f64)], users: &[BusId], v_min: f64, v_max: f64) -> Network {
    let mut ids: Vec<BusId> = vec![1];
    for &(a, b, _) in lines {
        for id in [a, b] {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    let buses = ids
        .iter()
        .map(|&id| {
            let mut b = Bus::junction(id);
            if users.contains(&id) {
                b.load = PhaseSet::ABC;
                b.pv = PhaseSet::ABC;
            }
            b
        })
        .collect();
    let lines = lines.iter().map(|&(a, b, r)| Line::uniform(a, b, r, 0.5 * r)).collect();
    Network::new(buses, lines, Source { bus: 1, v_sub: 230.0, v_min, v_max, base_voltage: 230.0 }).unwrap()
}

fn grid(hours: usize, days: usize) -> TimeGrid {
    let specs = (0..days).map(|d| DaySpec::new(&format!("d{d}"), &format!("s{d}"), 365.0 / days as f64)).collect();
    TimeGrid::new(hours, 24.0 / hours as f64, specs).unwrap()
}

/// `f(bus, phase, day, hour) -> (load kW, PV kW)` at every flagged bus.
fn profiles(net: &Network, grid: &TimeGrid, f: impl Fn(BusId, usize, usize, usize) -> (f64, f64)) -> ProfileSet {
    let mut recs = Vec::new();
    for bus in net.buses().iter().filter(|b| !b.load.is_empty()) {
        for ph in Phase::ALL {
            for d in 0..grid.day_count() {
                for h in 0..grid.hours_per_day() {
                    let (p_load, p_pv) = f(bus.id, ph.index(), d, h);
                    recs.push(ProfileRecord {
                        bus: bus.id,
                        phase: ph,
                        day: d,
                        hour: h,
                        p_load,
                        q_load: 0.2 * p_load,
                        p_pv,
                        q_pv: 0.0,
                    });
                }
            }
        }
    }
    ProfileSet::from_records(net, grid, recs).unwrap()
}

fn injection(prob: &SizingProblem, placements: &[Placement], d: usize, t: usize) -> Injection {
    let hours = prob.grid.hours_per_day();
    let mut inj = Injection::from_profiles(&prob.net, &prob.profiles, d * hours + t, 1.0);
    for p in placements {
        let s = &p.schedules[d];
        inj.add_balanced(prob.net.bus_index(p.bus).unwrap(), s.p_plus[t] - s.p_minus[t]);
    }
    inj
}

/// Weighted annual losses of the linearized feeder, from line flows.
fn lin_annual_loss(prob: &SizingProblem, placements: &[Placement]) -> f64 {
    let mut total = 0.0;
    for (d, day) in prob.grid.days().iter().enumerate() {
        for t in 0..prob.grid.hours_per_day() {
            let flows = lin_flows(&prob.net, &injection(prob, placements, d, t));
            total += day.weight * prob.grid.delta_t() * branch_losses(&prob.net, &flows).total;
        }
    }
    total
}

fn spec_of(prob: &SizingProblem, p: &Placement) -> EssSpec {
    prob.template.spec(p.capacity_kwh, p.e0_kwh)
}

fn assert_verified(prob: &SizingProblem, sol: &SizingSolution) {
    for p in &sol.placements {
        let spec = spec_of(prob, p);
        for s in &p.schedules {
            check_cycle(&spec, s, prob.grid.delta_t()).unwrap();
            check_limits(&spec, s, prob.grid.delta_t()).unwrap();
        }
    }
    let lin = lin_annual_loss(prob, &sol.placements);
    assert!((sol.objective_kwh - lin).abs() <= 1e-9 * (1.0 + lin), "{} vs {lin}", sol.objective_kwh);
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Peaky evening load with midday PV, slightly unbalanced.
fn daily(bus: BusId, phase: usize, day: usize, hour: usize) -> (f64, f64) {
    let shape = [2.0, 1.0, 3.0, 6.0];
    let pv = [0.0, 2.0, 5.0, 0.5];
    let k = 1.0 + 0.15 * phase as f64 + 0.1 * (bus % 3) as f64 + 0.2 * day as f64;
    (k * shape[hour % 4], pv[hour % 4] * (1.0 + 0.05 * bus as f64))
}

fn chain() -> SizingProblem {
    let net = feeder(&[(1, 2, 0.05), (2, 3, 0.08)], &[2, 3], 200.0, 260.0);
    let g = grid(4, 1);
    let prof = profiles(&net, &g, daily);
    let mut p = SizingProblem::new(net, prof, g, vec![3], EssCount::Fixed(1));
    p.capacity_bound = Some(500.0);
    p
}

fn branched() -> SizingProblem {
    // 1 - 2 - 3 - 4 with a lateral 2 - 5 - 6
    let net =
        feeder(&[(1, 2, 0.04), (2, 3, 0.06), (3, 4, 0.07), (2, 5, 0.05), (5, 6, 0.09)], &[3, 4, 5, 6], 200.0, 260.0);
    let g = grid(4, 2);
    let prof = profiles(&net, &g, daily);
    SizingProblem::new(net, prof, g, vec![3, 4, 5, 6], EssCount::Fixed(1))
}

#[test]
fn no_candidates_leaves_base_losses() {
    let mut p = chain();
    p.candidates.clear();
    p.n_ess = EssCount::Free;
    let sol = solve_miqp(&p).unwrap();
    assert!(sol.placements.is_empty());
    let base = lin_annual_loss(&p, &[]);
    assert!(rel(sol.objective_kwh, base) < 1e-12);
    assert!(rel(sol.qp_objective, base) < 1e-12);
}

#[test]
fn unit_fixed_off_has_no_variables() {
    let mut p = chain();
    p.n_ess = EssCount::Free;
    let qp = build_qp(&p, &[BinaryState::Fixed(false)]).unwrap();
    assert_eq!(qp.n(), 0);
    assert!(rel(qp.constant, lin_annual_loss(&p, &[])) < 1e-12);
}

#[test]
fn assignment_shape_is_checked() {
    let p = chain();
    assert!(matches!(build_qp(&p, &[]), Err(SizingError::AssignmentLength { expected: 1, got: 0 })));
    assert!(matches!(build_qp(&p, &[BinaryState::Fixed(false)]), Err(SizingError::BadAssignment { .. })));
}

#[test]
fn invalid_problems_are_rejected() {
    let mut p = chain();
    p.candidates = vec![9];
    assert_eq!(solve_miqp(&p).unwrap_err(), SizingError::UnknownCandidate(9));
    let mut p = chain();
    p.candidates = vec![3, 3];
    assert_eq!(solve_miqp(&p).unwrap_err(), SizingError::DuplicateCandidate(3));
    let mut p = chain();
    p.n_ess = EssCount::Fixed(2);
    assert!(matches!(solve_miqp(&p), Err(SizingError::TooManyUnits { units: 2, candidates: 1 })));
    let mut p = chain();
    p.template.eta_plus = 1.5;
    assert!(matches!(solve_miqp(&p), Err(SizingError::InvalidTemplate(_))));
}

/// Objective of a lossless single unit at the end of `chain()` driven by
/// per-phase rates `u` (sum zero), with the smallest capacity that fits.
fn chain_objective(p: &SizingProblem, u: &[f64; 4]) -> f64 {
    let dt = p.grid.delta_t();
    let mut e = 0.0f64;
    let (mut lo, mut hi, mut peak) = (0.0f64, 0.0f64, 0.0f64);
    for &v in u {
        e += 3.0 * v * dt;
        lo = lo.min(e);
        hi = hi.max(e);
        peak = peak.max(v.abs());
    }
    let RateLimit::CRate { hours } = p.template.rate else { unreachable!() };
    let cap = (hi - lo).max(3.0 * peak * hours);
    let placement = Placement {
        bus: 3,
        capacity_kwh: cap,
        e0_kwh: -lo,
        schedules: vec![EssSchedule::new(
            u.iter().map(|v| v.max(0.0)).collect(),
            u.iter().map(|v| (-v).max(0.0)).collect(),
        )],
    };
    lin_annual_loss(p, &[placement]) + p.capacity_penalty * cap
}

#[test]
fn single_unit_matches_schedule_search() {
    let p = chain();
    let sol = solve_miqp(&p).unwrap();
    assert_verified(&p, &sol);

    let f = |x: [f64; 3]| chain_objective(&p, &[x[0], x[1], x[2], -(x[0] + x[1] + x[2])]);
    let mut best = ([0.0; 3], f([0.0; 3]));
    let steps: Vec<f64> = (0..=40).map(|i| -5.0 + 0.25 * i as f64).collect();
    for &a in &steps {
        for &b in &steps {
            for &c in &steps {
                let v = f([a, b, c]);
                if v < best.1 {
                    best = ([a, b, c], v);
                }
            }
        }
    }
    let mut h = 0.125;
    while h > 1e-9 {
        let mut moved = false;
        for i in 0..3 {
            for s in [-h, h] {
                let mut x = best.0;
                x[i] += s;
                let v = f(x);
                if v < best.1 {
                    best = (x, v);
                    moved = true;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    assert!(sol.qp_objective <= best.1 * (1.0 + 1e-6), "{} > {}", sol.qp_objective, best.1);
    assert!(rel(sol.qp_objective, best.1) < 1e-4, "{} vs {}", sol.qp_objective, best.1);
    let own = chain_objective(&p, &{
        let s = &sol.placements[0].schedules[0];
        let n = s.net();
        [n[0], n[1], n[2], n[3]]
    });
    assert!(own <= sol.qp_objective * (1.0 + 1e-6));
    assert!(sol.objective_kwh < lin_annual_loss(&p, &[]));
}

#[test]
fn symmetric_candidates_break_ties_by_bus_id() {
    let net = feeder(&[(1, 2, 0.05), (1, 3, 0.05)], &[2, 3], 200.0, 260.0);
    let g = grid(4, 1);
    let prof = profiles(&net, &g, |_, ph, d, h| daily(3, ph, d, h));
    for cands in [vec![2, 3], vec![3, 2]] {
        let mut p = SizingProblem::new(net.clone(), prof.clone(), g.clone(), cands, EssCount::Fixed(1));
        p.capacity_bound = Some(200.0);
        let sol = solve_miqp(&p).unwrap();
        assert_eq!(sol.buses(), vec![2]);
        let oracle = enumerate_oracle(&p).unwrap();
        assert_eq!(oracle.buses(), vec![2]);
    }
}

#[test]
fn branch_and_bound_matches_enumeration() {
    for n in [1, 2, 3] {
        let mut p = branched();
        p.n_ess = EssCount::Fixed(n);
        let a = solve_miqp(&p).unwrap();
        let b = enumerate_oracle(&p).unwrap();
        assert_eq!(a.buses(), b.buses(), "n = {n}");
        assert!(rel(a.qp_objective, b.qp_objective) < 1e-6);
        assert!(a.stats.best_bound <= a.qp_objective * (1.0 + 1e-6));
        assert_verified(&p, &a);
    }
}

#[test]
fn free_count_matches_enumeration() {
    let mut p = branched();
    p.n_ess = EssCount::Free;
    p.capacity_penalty = 0.5;
    let a = solve_miqp(&p).unwrap();
    let b = enumerate_oracle(&p).unwrap();
    assert_eq!(a.buses(), b.buses());
    assert!(rel(a.qp_objective, b.qp_objective) < 1e-6);
}

#[test]
fn more_units_never_lose_with_shared_capacity() {
    let mut p = branched();
    p.aggregate_cap = Some(40.0);
    p.capacity_bound = Some(60.0);
    let mut last = f64::INFINITY;
    for n in 1..=4 {
        p.n_ess = EssCount::Fixed(n);
        let sol = solve_miqp(&p).unwrap();
        assert!((sol.total_capacity() - 40.0).abs() < 1e-4, "{}", sol.total_capacity());
        assert!(sol.qp_objective <= last * (1.0 + 1e-6), "n = {n}: {} > {last}", sol.qp_objective);
        last = sol.qp_objective;
        assert_verified(&p, &sol);
    }
}

#[test]
fn relaxation_bounds_the_integer_optimum() {
    let mut p = branched();
    p.n_ess = EssCount::Fixed(2);
    p.capacity_bound = Some(80.0);
    let relaxed = solve_qp(&build_qp(&p, &[BinaryState::Relaxed; 4]).unwrap(), &p.qp).unwrap();
    let sol = solve_miqp(&p).unwrap();
    assert!(relaxed.objective_value <= sol.qp_objective * (1.0 + 1e-6));
}

#[test]
fn flat_load_without_pv_needs_no_storage() {
    let net = feeder(&[(1, 2, 0.05), (2, 3, 0.08)], &[2, 3], 200.0, 260.0);
    let g = grid(4, 1);
    let prof = profiles(&net, &g, |_, _, _, _| (3.0, 0.0));
    let p = SizingProblem::new(net, prof, g, vec![2, 3], EssCount::Free);
    let sol = solve_miqp(&p).unwrap();
    assert!(sol.total_capacity() < 1e-3, "{}", sol.total_capacity());
    assert!(rel(sol.objective_kwh, lin_annual_loss(&p, &[])) < 1e-6);
}

#[test]
fn storage_holds_voltage_under_export() {
    // midday export would push the far end above 246 V without storage
    let net = feeder(&[(1, 2, 0.08), (2, 3, 0.12)], &[2, 3], 200.0, 246.0);
    let g = grid(4, 1);
    let prof = profiles(&net, &g, |_, _, _, h| ([1.0, 1.0, 2.0, 3.0][h], [0.0, 20.0, 4.0, 0.0][h]));
    let base = lin_voltages(&net, &lin_flows(&net, &Injection::from_profiles(&net, &prof, 1, 1.0)));
    assert!(base[2].a > 246.0, "{}", base[2].a);
    let mut p = SizingProblem::new(net, prof, g, vec![3], EssCount::Fixed(1));
    p.capacity_bound = Some(400.0);
    let sol = solve_miqp(&p).unwrap();
    assert_verified(&p, &sol);
    for t in 0..4 {
        let v = lin_voltages(&p.net, &lin_flows(&p.net, &injection(&p, &sol.placements, 0, t)));
        for (b, trip) in v.iter().enumerate() {
            for (_, x) in trip.iter() {
                assert!((200.0 - 230.0 * 1e-6..=246.0 + 230.0 * 1e-6).contains(&x), "bus {b} hour {t}: {x}");
            }
        }
    }
}

#[test]
fn unreachable_voltage_is_infeasible() {
    // no candidate sits on the path of the overloaded bus
    let net = feeder(&[(1, 2, 0.2), (1, 3, 0.01)], &[2, 3], 228.0, 253.0);
    let g = grid(4, 1);
    let prof = profiles(&net, &g, |b, _, _, _| (if b == 2 { 10.0 } else { 0.0 }, 0.0));
    let p = SizingProblem::new(net, prof, g, vec![3], EssCount::Fixed(1));
    assert_eq!(solve_miqp(&p).unwrap_err(), SizingError::Infeasible);
}

#[test]
fn lossy_units_verify() {
    let mut p = branched();
    p.template.eta_plus = 0.95;
    p.template.eta_minus = 0.9;
    p.template.min_soc_fraction = 0.1;
    p.n_ess = EssCount::Fixed(2);
    let sol = solve_miqp(&p).unwrap();
    assert_verified(&p, &sol);
}

#[test]
fn fixed_ratings_verify() {
    let mut p = branched();
    p.template.rate = RateLimit::Fixed { charge_kw: 6.0, discharge_kw: 6.0 };
    p.capacity_bound = Some(100.0);
    let sol = solve_miqp(&p).unwrap();
    assert_verified(&p, &sol);
    let b = enumerate_oracle(&p).unwrap();
    assert_eq!(sol.buses(), b.buses());
}

#[test]
fn enumeration_budget() {
    let ids: Vec<BusId> = (2..=21).collect();
    let lines: Vec<(BusId, BusId, f64)> = ids.iter().map(|&b| (b - 1, b, 0.01)).collect();
    let net = feeder(&lines, &[], 200.0, 260.0);
    let g = grid(4, 1);
    let prof = ProfileSet::empty(&g);
    let p = SizingProblem::new(net, prof, g, ids, EssCount::Free);
    assert_eq!(
        enumerate_oracle(&p).unwrap_err(),
        SizingError::BudgetExceeded { combinations: 1 << 20, limit: ENUMERATION_LIMIT }
    );

    let mut p = branched();
    p.n_ess = EssCount::Fixed(2);
    let sol = enumerate_oracle(&p).unwrap();
    assert_eq!(sol.stats.nodes, 6);
}

#[test]
fn derived_bound_is_noted() {
    let mut p = chain();
    p.capacity_bound = None;
    let sol = solve_miqp(&p).unwrap();
    assert_eq!(sol.stats.notes.len(), 1);
    assert!(sol.capacity_bound_kwh >= sol.total_capacity());
    assert_eq!(capacity_bound(&p).unwrap(), sol.capacity_bound_kwh);
}

#[test]
fn solves_are_deterministic() {
    let p = branched();
    assert_eq!(solve_miqp(&p).unwrap(), solve_miqp(&p).unwrap());
}
