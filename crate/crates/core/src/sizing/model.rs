// Storage injections enter the linearized feeder affinely, so flows and
// voltages are substituted out: a unit at candidate j charging u_j kW per
// phase shifts every upstream line flow by u_j on each phase. Losses become
// a quadratic in u and voltages an affine map of u.

use alloc::vec;
use alloc::vec::Vec;

use super::{BinaryState, EssCount, Placement, RateLimit, SizingError, SizingProblem};
use crate::math;
use crate::netmodel::{Phase, PhaseTriple};
use crate::powerflow::{lin_flows, lin_voltages_pu, Injection};
use crate::qpsolve::{QpBuilder, QpProblem};
use crate::storage::{check_cycle, check_limits, EssSchedule};

const VOLTAGE_CHECK_TOL: f64 = 1e-9;

/// Feeder data that does not depend on the binary assignment.
pub(crate) struct Model {
    pub(crate) cand_bus: Vec<usize>,
    pub(crate) hours: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) dt: f64,
    /// Loss Hessian on unit rates, `k x k` row-major (kW per kW²).
    pub(crate) h: Vec<f64>,
    /// Per step: loss gradient half-coefficients for each unit.
    pub(crate) g: Vec<Vec<f64>>,
    /// Per step: losses without storage (kW).
    pub(crate) base_loss: Vec<f64>,
    /// Per step, per bus: voltages without storage (pu).
    pub(crate) v0: Vec<Vec<PhaseTriple>>,
    /// Per bus, per phase: voltage drop per kW charged at each unit (pu/kW).
    pub(crate) sens: Vec<[Vec<f64>; 3]>,
    pub(crate) bound: f64,
}

impl Model {
    pub(crate) fn new(prob: &SizingProblem) -> Result<Model, SizingError> {
        let cand_bus = prob.validate()?;
        let net = &prob.net;
        let k = cand_bus.len();
        let n_lines = net.lines().len();
        let v_sub = net.v_sub_pu();
        let v2 = v_sub * v_sub;
        let r = net.r_pu();

        let mut on_path = vec![vec![false; n_lines]; k];
        for (j, &b) in cand_bus.iter().enumerate() {
            for l in net.path_lines(b) {
                on_path[j][l] = true;
            }
        }
        let r_sum: Vec<f64> = r.iter().map(|t| t.sum() / v2).collect();
        let mut h = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                h[a * k + b] = (0..n_lines).filter(|&l| on_path[a][l] && on_path[b][l]).map(|l| r_sum[l]).sum();
            }
        }
        let mut sens = Vec::with_capacity(net.bus_count());
        for b in 0..net.bus_count() {
            let path = net.path_lines(b);
            let per_phase = Phase::ALL.map(|f| {
                (0..k)
                    .map(|j| path.iter().filter(|&&l| on_path[j][l]).map(|&l| r[l][f] / v_sub).sum())
                    .collect::<Vec<f64>>()
            });
            sens.push(per_phase);
        }

        let hours = prob.grid.hours_per_day();
        let steps = prob.grid.steps();
        let mut g = Vec::with_capacity(steps);
        let mut base_loss = Vec::with_capacity(steps);
        let mut v0 = Vec::with_capacity(steps);
        let mut energy = vec![0.0; prob.grid.day_count()];
        for s in 0..steps {
            let inj = Injection::from_profiles(net, &prob.profiles, s, 1.0);
            energy[s / hours] += inj.p.iter().map(|t| t.map(math::abs).sum()).sum::<f64>() * prob.grid.delta_t();
            let flows = lin_flows(net, &inj);
            let mut gs = vec![0.0; k];
            for (j, gj) in gs.iter_mut().enumerate() {
                for l in (0..n_lines).filter(|&l| on_path[j][l]) {
                    *gj += Phase::ALL.iter().map(|&f| r[l][f] * flows.p[l][f]).sum::<f64>() / v2;
                }
            }
            g.push(gs);
            base_loss.push(crate::powerflow::branch_losses(net, &flows).total);
            v0.push(lin_voltages_pu(net, &flows));
        }
        let energy_bound = energy.iter().fold(1.0f64, |m, &e| m.max(e));
        Ok(Model {
            cand_bus,
            hours,
            weights: prob.grid.days().iter().map(|d| d.weight).collect(),
            dt: prob.grid.delta_t(),
            h,
            g,
            base_loss,
            v0,
            sens,
            bound: prob.capacity_bound.unwrap_or(energy_bound),
        })
    }

    pub(crate) fn k(&self) -> usize {
        self.cand_bus.len()
    }

    /// Linearized losses (kW) at step `s` with per-phase unit rates `u`
    /// (indexed by candidate; absent units carry zero).
    pub(crate) fn step_loss(&self, s: usize, u: &[f64]) -> f64 {
        let k = self.k();
        let mut v = self.base_loss[s];
        for a in 0..k {
            if u[a] == 0.0 {
                continue;
            }
            v += 2.0 * self.g[s][a] * u[a];
            for b in 0..k {
                v += u[a] * u[b] * self.h[a * k + b];
            }
        }
        v
    }

    /// Weighted annual losses (kWh) for the given placements.
    pub(crate) fn annual_loss(&self, prob: &SizingProblem, placements: &[Placement]) -> f64 {
        let k = self.k();
        let mut total = 0.0;
        for (d, w) in self.weights.iter().enumerate() {
            for t in 0..self.hours {
                let mut u = vec![0.0; k];
                for p in placements {
                    let j = prob.candidates.iter().position(|&c| c == p.bus).expect("placement at a candidate");
                    u[j] += p.schedules[d].p_plus[t] - p.schedules[d].p_minus[t];
                }
                total += w * self.dt * self.step_loss(d * self.hours + t, &u);
            }
        }
        total
    }
}

/// Variable indices of one unit present in the QP.
pub(crate) struct UnitVars {
    pub(crate) cand: usize,
    pub(crate) cap: usize,
    pub(crate) e0: usize,
    pub(crate) b: Option<usize>,
    /// Indexed `day * hours + hour`.
    pub(crate) pp: Vec<usize>,
    pub(crate) pm: Vec<usize>,
    /// State of charge after hours `1..hours-1` of each day, `day * (hours-1) + t - 1`.
    pub(crate) e: Vec<usize>,
}

pub(crate) struct Layout {
    pub(crate) units: Vec<UnitVars>,
}

/// Assembles the QP for a binary assignment with `prob.capacity_bound` (or
/// the energy bound when unset) as the per-unit capacity limit.
pub fn build_qp(prob: &SizingProblem, binaries: &[BinaryState]) -> Result<QpProblem, SizingError> {
    let model = Model::new(prob)?;
    Ok(build(&model, prob, binaries)?.0)
}

pub(crate) fn build(
    model: &Model,
    prob: &SizingProblem,
    states: &[BinaryState],
) -> Result<(QpProblem, Layout), SizingError> {
    let k = model.k();
    if states.len() != k {
        return Err(SizingError::AssignmentLength { expected: k, got: states.len() });
    }
    let ones = states.iter().filter(|s| **s == BinaryState::Fixed(true)).count();
    let relaxed = states.iter().filter(|s| **s == BinaryState::Relaxed).count();
    if let EssCount::Fixed(n) = prob.n_ess {
        if ones > n || ones + relaxed < n || (relaxed == 0 && ones != n) {
            return Err(SizingError::BadAssignment { ones, expected: n });
        }
    }

    let hours = model.hours;
    let days = model.weights.len();
    let dt = model.dt;
    let m = model.bound;
    let tmpl = &prob.template;
    let inf = f64::INFINITY;
    let mut qb = QpBuilder::new();
    let mut units = Vec::new();

    for (j, st) in states.iter().enumerate() {
        if *st == BinaryState::Fixed(false) {
            continue;
        }
        let cap = qb.add_var(0.0, m);
        let e0 = qb.add_var(0.0, m);
        let b = (*st == BinaryState::Relaxed).then(|| qb.add_var(0.0, 1.0));
        let mut pp = Vec::with_capacity(days * hours);
        let mut pm = Vec::with_capacity(days * hours);
        for _ in 0..days * hours {
            pp.push(qb.add_var(0.0, inf));
            pm.push(qb.add_var(0.0, inf));
        }
        let e: Vec<usize> = (0..days * (hours - 1)).map(|_| qb.add_var(0.0, inf)).collect();
        units.push(UnitVars { cand: j, cap, e0, b, pp, pm, e });
    }

    // losses
    for d in 0..days {
        let coef = model.weights[d] * dt;
        for t in 0..hours {
            let s = d * hours + t;
            qb.add_constant(coef * model.base_loss[s]);
            for (a, ua) in units.iter().enumerate() {
                let ga = 2.0 * coef * model.g[s][ua.cand];
                qb.add_linear(ua.pp[s], ga);
                qb.add_linear(ua.pm[s], -ga);
                for ub in &units[a..] {
                    let q = 2.0 * coef * model.h[ua.cand * k + ub.cand];
                    if q == 0.0 {
                        continue;
                    }
                    qb.add_hessian(ua.pp[s], ub.pp[s], q);
                    qb.add_hessian(ua.pm[s], ub.pm[s], q);
                    qb.add_hessian(ua.pp[s], ub.pm[s], -q);
                    if ua.cand != ub.cand {
                        qb.add_hessian(ua.pm[s], ub.pp[s], -q);
                    }
                }
            }
        }
    }

    let charge_gain = 3.0 * dt * tmpl.eta_plus;
    let discharge_gain = 3.0 * dt / tmpl.eta_minus;
    for u in &units {
        qb.add_linear(u.cap, prob.capacity_penalty);
        qb.add_ineq(&[(u.e0, 1.0), (u.cap, -1.0)], -inf, 0.0);
        if tmpl.min_soc_fraction > 0.0 {
            qb.add_ineq(&[(u.e0, 1.0), (u.cap, -tmpl.min_soc_fraction)], 0.0, inf);
        }
        for d in 0..days {
            for t in 0..hours {
                let s = d * hours + t;
                // e_t - e_{t-1} - 3 dt (eta+ p+ - p- / eta-) = 0, e_0 = e_H = e0
                let prev = if t == 0 { u.e0 } else { u.e[d * (hours - 1) + t - 1] };
                let next = if t + 1 == hours { u.e0 } else { u.e[d * (hours - 1) + t] };
                let mut row = vec![(u.pp[s], -charge_gain), (u.pm[s], discharge_gain)];
                if prev != next {
                    row.push((next, 1.0));
                    row.push((prev, -1.0));
                }
                qb.add_eq(&row, 0.0);
                if t + 1 < hours {
                    qb.add_ineq(&[(next, 1.0), (u.cap, -1.0)], -inf, 0.0);
                    if tmpl.min_soc_fraction > 0.0 {
                        qb.add_ineq(&[(next, 1.0), (u.cap, -tmpl.min_soc_fraction)], 0.0, inf);
                    }
                }
                match tmpl.rate {
                    RateLimit::CRate { hours: h } => {
                        qb.add_ineq(&[(u.pp[s], 3.0), (u.cap, -1.0 / h)], -inf, 0.0);
                        qb.add_ineq(&[(u.pm[s], 3.0), (u.cap, -1.0 / h)], -inf, 0.0);
                    }
                    RateLimit::Fixed { charge_kw, discharge_kw } => match u.b {
                        Some(b) => {
                            qb.add_ineq(&[(u.pp[s], 3.0), (b, -charge_kw)], -inf, 0.0);
                            qb.add_ineq(&[(u.pm[s], 3.0), (b, -discharge_kw)], -inf, 0.0);
                        }
                        None => {
                            qb.set_bounds(u.pp[s], 0.0, charge_kw / 3.0);
                            qb.set_bounds(u.pm[s], 0.0, discharge_kw / 3.0);
                        }
                    },
                }
            }
        }
        if let Some(b) = u.b {
            qb.add_ineq(&[(u.cap, 1.0), (b, -m)], -inf, 0.0);
        }
    }

    if let EssCount::Fixed(n) = prob.n_ess {
        let terms: Vec<(usize, f64)> = units.iter().filter_map(|u| u.b.map(|b| (b, 1.0))).collect();
        if !terms.is_empty() {
            qb.add_eq(&terms, (n - ones) as f64);
        }
    }
    if let Some(agg) = prob.aggregate_cap {
        let terms: Vec<(usize, f64)> = units.iter().map(|u| (u.cap, 1.0)).collect();
        if terms.is_empty() {
            if agg > 0.0 {
                return Err(SizingError::Infeasible);
            }
        } else {
            qb.add_eq(&terms, agg);
        }
    }

    // linearized voltage limits on every present phase below the substation
    let (v_min, v_max) = (prob.net.v_min_pu(), prob.net.v_max_pu());
    let root = prob.net.root_index();
    for d in 0..days {
        for t in 0..hours {
            let s = d * hours + t;
            for (b, bus) in prob.net.buses().iter().enumerate() {
                if b == root {
                    continue;
                }
                for f in bus.phases.iter() {
                    let v0 = model.v0[s][b][f];
                    let mut terms = Vec::new();
                    for u in &units {
                        let c = model.sens[b][f.index()][u.cand];
                        if c != 0.0 {
                            terms.push((u.pp[s], -c));
                            terms.push((u.pm[s], c));
                        }
                    }
                    if terms.is_empty() {
                        if v0 < v_min - VOLTAGE_CHECK_TOL || v0 > v_max + VOLTAGE_CHECK_TOL {
                            return Err(SizingError::VoltageInfeasible { bus: bus.id, phase: f, day: d, hour: t });
                        }
                        continue;
                    }
                    qb.add_ineq(&terms, v_min - v0, v_max - v0);
                }
            }
        }
    }

    Ok((qb.build()?, Layout { units }))
}

/// Reads installed units out of a fully fixed solution, nets simultaneous
/// charge and discharge of lossless units, absorbs solver-tolerance slack
/// into capacity and initial charge, then verifies every schedule.
pub(crate) fn decode(
    model: &Model,
    prob: &SizingProblem,
    layout: &Layout,
    x: &[f64],
) -> Result<Vec<Placement>, SizingError> {
    let hours = model.hours;
    let days = model.weights.len();
    let tmpl = &prob.template;
    let frac = tmpl.min_soc_fraction;
    let mut out = Vec::new();
    for u in &layout.units {
        let bus = prob.candidates[u.cand];
        let mut schedules = Vec::with_capacity(days);
        for d in 0..days {
            let r = d * hours..(d + 1) * hours;
            let mut pp: Vec<f64> = u.pp[r.clone()].iter().map(|&i| x[i].max(0.0)).collect();
            let mut pm: Vec<f64> = u.pm[r].iter().map(|&i| x[i].max(0.0)).collect();
            if let RateLimit::Fixed { charge_kw, discharge_kw } = tmpl.rate {
                pp.iter_mut().for_each(|v| *v = v.min(charge_kw / 3.0));
                pm.iter_mut().for_each(|v| *v = v.min(discharge_kw / 3.0));
            }
            // close the cycle by trimming whichever direction overshoots
            let (stored, drawn) = if tmpl.is_lossless() {
                let net: Vec<f64> = pp.iter().zip(&pm).map(|(a, b)| a - b).collect();
                pp = net.iter().map(|v| v.max(0.0)).collect();
                pm = net.iter().map(|v| (-v).max(0.0)).collect();
                (pp.iter().sum::<f64>(), pm.iter().sum::<f64>())
            } else {
                (tmpl.eta_plus * pp.iter().sum::<f64>(), pm.iter().sum::<f64>() / tmpl.eta_minus)
            };
            if stored > drawn {
                pp.iter_mut().for_each(|v| *v *= drawn / stored);
            } else if drawn > stored {
                pm.iter_mut().for_each(|v| *v *= stored / drawn);
            }
            let sched = EssSchedule::new(pp, pm);
            schedules.push(sched);
        }

        // energy swing relative to the shared initial charge
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        let mut peak = 0.0f64;
        for s in &schedules {
            let mut e = 0.0;
            for t in 0..hours {
                e += 3.0 * model.dt * (tmpl.eta_plus * s.p_plus[t] - s.p_minus[t] / tmpl.eta_minus);
                lo = lo.min(e);
                hi = hi.max(e);
                peak = peak.max(3.0 * s.p_plus[t]).max(3.0 * s.p_minus[t]);
            }
        }
        let mut cap = x[u.cap].max(0.0).max((hi - lo) / (1.0 - frac));
        if let RateLimit::CRate { hours: h } = tmpl.rate {
            cap = cap.max(peak * h);
        }
        let e0 = x[u.e0].max(frac * cap - lo).min(cap - hi);

        let spec = tmpl.spec(cap, e0);
        for (d, sched) in schedules.iter().enumerate() {
            for check in [check_cycle(&spec, sched, model.dt), check_limits(&spec, sched, model.dt)] {
                if let Err(v) = check {
                    return Err(SizingError::Verification { bus, day: d, violation: v[0].clone() });
                }
            }
        }
        out.push(Placement { bus, capacity_kwh: cap, e0_kwh: e0, schedules });
    }
    out.sort_by_key(|p| p.bus);
    Ok(out)
}
