//! Exact three-phase backward/forward-sweep power flow and the linearized
//! branch-flow model (flows as downstream sums, voltage drops referred to
//! the substation voltage, losses with a constant `v_sub` denominator).
//!
//! Powers are kW/kvar per phase (numerically per-unit on a 1 kVA base);
//! positive `p` is consumption.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use thiserror::Error;

use crate::math;
use crate::netmodel::{Network, Phase, PhaseTriple};
use crate::profiles::ProfileSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("sweep tolerance must be positive and max_iter at least 1")]
    InvalidOptions,
    #[error("injection covers {got} buses, network has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Net per-phase consumption at every bus (indexed like `Network::buses`).
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub p: Vec<PhaseTriple>,
    pub q: Vec<PhaseTriple>,
}

impl Injection {
    pub fn zeros(net: &Network) -> Self {
        let n = net.bus_count();
        Injection { p: vec![PhaseTriple::ZERO; n], q: vec![PhaseTriple::ZERO; n] }
    }

    /// Load minus PV at time step `step` (= `day * hours + hour`), with PV
    /// scaled by `pv_scale`.
    pub fn from_profiles(net: &Network, profiles: &ProfileSet, step: usize, pv_scale: f64) -> Self {
        let mut inj = Injection::zeros(net);
        let pv_scale = pv_scale * profiles.pv_scale();
        for (&(bus, phase), prof) in profiles.iter_unscaled() {
            let Some(i) = net.bus_index(bus) else { continue };
            inj.p[i][phase] += prof.p_load[step] - pv_scale * prof.p_pv[step];
            inj.q[i][phase] += prof.q_load[step] - pv_scale * prof.q_pv[step];
        }
        inj
    }

    /// Adds the same active power on all three phases of a bus
    /// (a three-phase storage unit; positive = charging).
    pub fn add_balanced(&mut self, bus_index: usize, p_per_phase: f64) {
        self.p[bus_index] += PhaseTriple::splat(p_per_phase);
    }

    pub fn add(&self, other: &Injection) -> Injection {
        Injection {
            p: self.p.iter().zip(&other.p).map(|(a, b)| *a + *b).collect(),
            q: self.q.iter().zip(&other.q).map(|(a, b)| *a + *b).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    /// Convergence threshold on the largest complex voltage change (pu).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { tol: 1e-8, max_iter: 100 }
    }
}

/// Per-line, per-phase active and reactive flow (kW, kvar), measured in the
/// direction away from the substation.
#[derive(Clone, Debug, PartialEq)]
pub struct LineFlows {
    pub p: Vec<PhaseTriple>,
    pub q: Vec<PhaseTriple>,
}

impl LineFlows {
    pub fn negated(&self) -> LineFlows {
        LineFlows {
            p: self.p.iter().map(|t| t.map(|v| -v)).collect(),
            q: self.q.iter().map(|t| t.map(|v| -v)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    /// Three-phase loss of each line (kW).
    pub per_line: Vec<f64>,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowSolution {
    /// Bus voltages in per-unit, one phasor per phase.
    pub voltages: Vec<[Complex64; 3]>,
    /// Sending-end flows and line losses (kW / kvar).
    pub p_flow: Vec<PhaseTriple>,
    pub q_flow: Vec<PhaseTriple>,
    pub loss: Vec<PhaseTriple>,
    pub total_loss: f64,
    pub converged: bool,
    pub iterations: usize,
    /// The injection this solution was computed for.
    pub injection: Injection,
    base_voltage: f64,
}

impl PowerFlowSolution {
    /// Voltage phasor in volts.
    pub fn voltage(&self, bus_index: usize, phase: Phase) -> Complex64 {
        self.voltages[bus_index][phase.index()] * self.base_voltage
    }

    pub fn magnitude_volts(&self, bus_index: usize, phase: Phase) -> f64 {
        self.voltages[bus_index][phase.index()].norm() * self.base_voltage
    }

    pub fn magnitude_pu(&self, bus_index: usize, phase: Phase) -> f64 {
        self.voltages[bus_index][phase.index()].norm()
    }

    /// The linearized model cast as a solution: flows from [`lin_flows`],
    /// magnitudes from [`lin_voltages`] at nominal angles, losses from
    /// [`branch_losses`].
    pub fn linear(net: &Network, inj: &Injection) -> PowerFlowSolution {
        let flows = lin_flows(net, inj);
        let mags = lin_voltages_pu(net, &flows);
        let voltages =
            mags.iter().map(|m| Phase::ALL.map(|p| Complex64::from_polar(m[p], p.nominal_angle()))).collect();
        let v2 = net.v_sub_pu() * net.v_sub_pu();
        let loss: Vec<PhaseTriple> = net
            .r_pu()
            .iter()
            .zip(flows.p.iter().zip(&flows.q))
            .map(|(r, (p, q))| {
                PhaseTriple::new(
                    r.a * (p.a * p.a + q.a * q.a) / v2,
                    r.b * (p.b * p.b + q.b * q.b) / v2,
                    r.c * (p.c * p.c + q.c * q.c) / v2,
                )
            })
            .collect();
        let total_loss = loss.iter().map(|l| l.sum()).sum();
        PowerFlowSolution {
            voltages,
            p_flow: flows.p,
            q_flow: flows.q,
            loss,
            total_loss,
            converged: true,
            iterations: 0,
            injection: inj.clone(),
            base_voltage: net.base_voltage(),
        }
    }
}

fn check_dims(net: &Network, inj: &Injection) -> Result<(), PowerFlowError> {
    if inj.p.len() != net.bus_count() || inj.q.len() != net.bus_count() {
        return Err(PowerFlowError::DimensionMismatch { expected: net.bus_count(), got: inj.p.len().min(inj.q.len()) });
    }
    Ok(())
}

/// Backward/forward sweep with constant-power loads, flat start and the
/// substation held at `v_sub` with nominal phase angles.
///
/// Non-convergence is reported through `converged = false`.
pub fn solve_exact(net: &Network, inj: &Injection, opts: &SweepOptions) -> Result<PowerFlowSolution, PowerFlowError> {
    if !(opts.tol > 0.0 && opts.tol.is_finite()) || opts.max_iter == 0 {
        return Err(PowerFlowError::InvalidOptions);
    }
    check_dims(net, inj)?;
    let n_lines = net.lines().len();
    let root = net.root_index();
    let order = net.bfs_order();
    let v_sub = net.v_sub_pu();
    let z: Vec<[Complex64; 3]> =
        net.r_pu().iter().zip(net.x_pu()).map(|(r, x)| Phase::ALL.map(|p| Complex64::new(r[p], x[p]))).collect();
    let s: Vec<[Complex64; 3]> =
        inj.p.iter().zip(&inj.q).map(|(p, q)| Phase::ALL.map(|f| Complex64::new(p[f], q[f]))).collect();

    let flat = Phase::ALL.map(|p| Complex64::from_polar(v_sub, p.nominal_angle()));
    let mut v = vec![flat; net.bus_count()];
    let mut current = vec![[Complex64::new(0.0, 0.0); 3]; n_lines];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        for &b in order.iter().rev() {
            let Some(l) = net.parent_line(b) else { continue };
            let mut i_sum = [Complex64::new(0.0, 0.0); 3];
            for f in 0..3 {
                i_sum[f] = (s[b][f] / v[b][f]).conj();
            }
            for &c in net.child_lines(b) {
                for f in 0..3 {
                    i_sum[f] += current[c][f];
                }
            }
            current[l] = i_sum;
        }
        let mut max_dv: f64 = 0.0;
        for &b in order {
            if b == root {
                continue;
            }
            let l = net.parent_line(b).expect("non-root bus has a parent line");
            let (up, _) = net.line_ends(l);
            for f in 0..3 {
                let new = v[up][f] - z[l][f] * current[l][f];
                max_dv = max_dv.max((new - v[b][f]).norm());
                v[b][f] = new;
            }
        }
        if !max_dv.is_finite() {
            break;
        }
        if max_dv < opts.tol {
            converged = true;
            break;
        }
    }

    // Line quantities from the final voltages (KVL-consistent currents).
    let mut p_flow = vec![PhaseTriple::ZERO; n_lines];
    let mut q_flow = vec![PhaseTriple::ZERO; n_lines];
    let mut loss = vec![PhaseTriple::ZERO; n_lines];
    for l in 0..n_lines {
        let (up, down) = net.line_ends(l);
        for p in Phase::ALL {
            let f = p.index();
            let i = (v[up][f] - v[down][f]) / z[l][f];
            let s_send = v[up][f] * i.conj();
            p_flow[l][p] = s_send.re;
            q_flow[l][p] = s_send.im;
            loss[l][p] = z[l][f].re * i.norm_sqr();
        }
    }
    let total_loss = loss.iter().map(|t| t.sum()).sum();
    Ok(PowerFlowSolution {
        voltages: v,
        p_flow,
        q_flow,
        loss,
        total_loss,
        converged,
        iterations,
        injection: inj.clone(),
        base_voltage: net.base_voltage(),
    })
}

/// Largest complex power mismatch (pu) at any non-substation bus between
/// the injection and what the solution's voltages and line currents deliver.
pub fn power_mismatch(net: &Network, sol: &PowerFlowSolution) -> f64 {
    let z = |l: usize, f: Phase| Complex64::new(net.r_pu()[l][f], net.x_pu()[l][f]);
    let current = |l: usize, f: Phase| {
        let (up, down) = net.line_ends(l);
        (sol.voltages[up][f.index()] - sol.voltages[down][f.index()]) / z(l, f)
    };
    let mut worst: f64 = 0.0;
    for b in 0..net.bus_count() {
        let Some(l) = net.parent_line(b) else { continue };
        for f in Phase::ALL {
            let mut i_net = current(l, f);
            for &c in net.child_lines(b) {
                i_net -= current(c, f);
            }
            let delivered = sol.voltages[b][f.index()] * i_net.conj();
            let wanted = Complex64::new(sol.injection.p[b][f], sol.injection.q[b][f]);
            worst = worst.max((delivered - wanted).norm());
        }
    }
    worst
}

/// Lossless flows: every line carries the sum of net injections over its
/// downstream buses, phase by phase.
pub fn lin_flows(net: &Network, inj: &Injection) -> LineFlows {
    let n_lines = net.lines().len();
    let mut p = vec![PhaseTriple::ZERO; n_lines];
    let mut q = vec![PhaseTriple::ZERO; n_lines];
    for &b in net.bfs_order().iter().rev() {
        let Some(l) = net.parent_line(b) else { continue };
        let mut fp = inj.p[b];
        let mut fq = inj.q[b];
        for &c in net.child_lines(b) {
            fp += p[c];
            fq += q[c];
        }
        p[l] = fp;
        q[l] = fq;
    }
    LineFlows { p, q }
}

pub(crate) fn lin_voltages_pu(net: &Network, flows: &LineFlows) -> Vec<PhaseTriple> {
    let v_sub = net.v_sub_pu();
    let mut v = vec![PhaseTriple::ZERO; net.bus_count()];
    v[net.root_index()] = PhaseTriple::splat(v_sub);
    for &b in net.bfs_order() {
        let Some(l) = net.parent_line(b) else { continue };
        let (up, _) = net.line_ends(l);
        let (r, x) = (net.r_pu()[l], net.x_pu()[l]);
        let mut vb = PhaseTriple::ZERO;
        for f in Phase::ALL {
            vb[f] = v[up][f] - (flows.p[l][f] * r[f] + flows.q[l][f] * x[f]) / v_sub;
        }
        v[b] = vb;
    }
    v
}

/// Linearized voltage magnitudes (volts) from lossless flows.
pub fn lin_voltages(net: &Network, flows: &LineFlows) -> Vec<PhaseTriple> {
    let base = net.base_voltage();
    lin_voltages_pu(net, flows).into_iter().map(|t| t.map(|v| v * base)).collect()
}

/// Line losses `sum_f R (p^2 + q^2) / v_sub^2` (kW) and their total.
pub fn branch_losses(net: &Network, flows: &LineFlows) -> LossReport {
    let v2 = net.v_sub_pu() * net.v_sub_pu();
    let per_line: Vec<f64> = net
        .r_pu()
        .iter()
        .zip(flows.p.iter().zip(&flows.q))
        .map(|(r, (p, q))| Phase::ALL.iter().map(|&f| r[f] * (p[f] * p[f] + q[f] * q[f]) / v2).sum::<f64>())
        .collect();
    let total = per_line.iter().sum();
    LossReport { per_line, total }
}

/// Largest violation (pu) of the full branch-flow recursions on a solution:
///
/// * `P_ij = sum_k P_jk + R l_ij + p_j`
/// * `Q_ij = sum_k Q_jk + X l_ij + q_j`
/// * `v_j^2 = v_i^2 - 2 (R P_ij + X Q_ij) + (R^2 + X^2) l_ij`
///
/// with `l_ij = (P_ij^2 + Q_ij^2) / v_i^2`, sending-end flows and the
/// solution's own voltage magnitudes.
pub fn distflow_residual(net: &Network, sol: &PowerFlowSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for l in 0..net.lines().len() {
        let (up, down) = net.line_ends(l);
        for f in Phase::ALL {
            let r = net.r_pu()[l][f];
            let x = net.x_pu()[l][f];
            let p = sol.p_flow[l][f];
            let q = sol.q_flow[l][f];
            let vi = sol.magnitude_pu(up, f);
            let vj = sol.magnitude_pu(down, f);
            let ell = (p * p + q * q) / (vi * vi);
            let (mut p_down, mut q_down) = (0.0, 0.0);
            for &c in net.child_lines(down) {
                p_down += sol.p_flow[c][f];
                q_down += sol.q_flow[c][f];
            }
            let rp = p - (p_down + r * ell + sol.injection.p[down][f]);
            let rq = q - (q_down + x * ell + sol.injection.q[down][f]);
            let rv = vj * vj - (vi * vi - 2.0 * (r * p + x * q) + (r * r + x * x) * ell);
            worst = worst.max(math::abs(rp)).max(math::abs(rq)).max(math::abs(rv));
        }
    }
    worst
}
