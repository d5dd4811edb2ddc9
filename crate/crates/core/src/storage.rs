//! Three-phase storage unit: state-of-charge recursion and feasibility checks.
//!
//! Rates are per phase; the unit draws or delivers the same power on all
//! three phases, so energy moves at three times the per-phase rate.

use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Tolerance on the cyclic energy balance (kWh).
pub const CYCLE_TOL_KWH: f64 = 1e-6;
/// Tolerance on rate (kW) and state-of-charge (kWh) limits.
pub const LIMIT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssSpec {
    pub eta_plus: f64,
    pub eta_minus: f64,
    /// Three-phase charge and discharge limits (kW).
    pub p_max_charge: f64,
    pub p_max_discharge: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub e0: f64,
}

impl EssSpec {
    /// Lossless unit with symmetric rate limit.
    pub fn lossless(e_max: f64, p_max: f64, e0: f64) -> Self {
        EssSpec { eta_plus: 1.0, eta_minus: 1.0, p_max_charge: p_max, p_max_discharge: p_max, e_min: 0.0, e_max, e0 }
    }

    pub fn is_valid(&self) -> bool {
        let eff = |e: f64| e > 0.0 && e <= 1.0;
        eff(self.eta_plus)
            && eff(self.eta_minus)
            && self.p_max_charge >= 0.0
            && self.p_max_discharge >= 0.0
            && 0.0 <= self.e_min
            && self.e_min <= self.e0
            && self.e0 <= self.e_max
    }

    pub fn is_lossless(&self) -> bool {
        self.eta_plus == 1.0 && self.eta_minus == 1.0
    }
}

/// Hourly per-phase charge and discharge rates (kW) over one cycle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EssSchedule {
    pub p_plus: Vec<f64>,
    pub p_minus: Vec<f64>,
}

impl EssSchedule {
    pub fn new(p_plus: Vec<f64>, p_minus: Vec<f64>) -> Self {
        assert_eq!(p_plus.len(), p_minus.len(), "charge and discharge series differ in length");
        EssSchedule { p_plus, p_minus }
    }

    pub fn zeros(hours: usize) -> Self {
        EssSchedule::new(alloc::vec![0.0; hours], alloc::vec![0.0; hours])
    }

    pub fn len(&self) -> usize {
        self.p_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_plus.is_empty()
    }

    /// Net per-phase rate, positive when charging.
    pub fn net(&self) -> Vec<f64> {
        self.p_plus.iter().zip(&self.p_minus).map(|(a, b)| a - b).collect()
    }

    /// Equivalent schedule without simultaneous charge and discharge.
    /// Identical state of charge only for a lossless unit.
    pub fn netted(&self) -> EssSchedule {
        let net = self.net();
        EssSchedule::new(net.iter().map(|&u| u.max(0.0)).collect(), net.iter().map(|&u| (-u).max(0.0)).collect())
    }

    /// Hours with both charging and discharging above the limit tolerance.
    pub fn simultaneous_hours(&self) -> Vec<usize> {
        (0..self.len()).filter(|&h| self.p_plus[h] > LIMIT_TOL && self.p_minus[h] > LIMIT_TOL).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StorageViolation {
    /// Net energy over the cycle (kWh) is not zero.
    CycleImbalance {
        net_kwh: f64,
    },
    NegativeRate {
        hour: usize,
    },
    ChargeRate {
        hour: usize,
        kw: f64,
        limit: f64,
    },
    DischargeRate {
        hour: usize,
        kw: f64,
        limit: f64,
    },
    /// State of charge after `hour` hours leaves the energy window.
    SocBelow {
        hour: usize,
        kwh: f64,
        limit: f64,
    },
    SocAbove {
        hour: usize,
        kwh: f64,
        limit: f64,
    },
}

impl fmt::Display for StorageViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StorageViolation::CycleImbalance { net_kwh } => {
                write!(f, "cycle does not return to the initial state of charge (net {net_kwh} kWh)")
            }
            StorageViolation::NegativeRate { hour } => write!(f, "negative rate at hour {hour}"),
            StorageViolation::ChargeRate { hour, kw, limit } => {
                write!(f, "charge {kw} kW exceeds {limit} kW at hour {hour}")
            }
            StorageViolation::DischargeRate { hour, kw, limit } => {
                write!(f, "discharge {kw} kW exceeds {limit} kW at hour {hour}")
            }
            StorageViolation::SocBelow { hour, kwh, limit } => {
                write!(f, "state of charge {kwh} kWh below {limit} kWh at hour {hour}")
            }
            StorageViolation::SocAbove { hour, kwh, limit } => {
                write!(f, "state of charge {kwh} kWh above {limit} kWh at hour {hour}")
            }
        }
    }
}

/// Energy moved into the unit during one hour step (kWh), three phases.
fn step_energy(spec: &EssSpec, p_plus: f64, p_minus: f64, delta_t: f64) -> f64 {
    3.0 * (spec.eta_plus * p_plus - p_minus / spec.eta_minus) * delta_t
}

/// State of charge at the start of the cycle and after every hour:
/// `e[0] = e0`, `e[t] = e[t-1] + 3 (eta+ p+ - p- / eta-) dt`.
pub fn soc_trajectory(spec: &EssSpec, sched: &EssSchedule, delta_t: f64) -> Vec<f64> {
    let mut e = Vec::with_capacity(sched.len() + 1);
    let mut cur = spec.e0;
    e.push(cur);
    for (&pp, &pm) in sched.p_plus.iter().zip(&sched.p_minus) {
        cur += step_energy(spec, pp, pm, delta_t);
        e.push(cur);
    }
    e
}

/// Checks that charged and discharged energy balance over the cycle, so the
/// trajectory returns to `e0`.
pub fn check_cycle(spec: &EssSpec, sched: &EssSchedule, delta_t: f64) -> Result<(), Vec<StorageViolation>> {
    let net: f64 = sched.p_plus.iter().zip(&sched.p_minus).map(|(&pp, &pm)| step_energy(spec, pp, pm, delta_t)).sum();
    if math::abs(net) > CYCLE_TOL_KWH {
        Err(alloc::vec![StorageViolation::CycleImbalance { net_kwh: net }])
    } else {
        Ok(())
    }
}

/// Flags every hour breaking a rate limit (`3 p <= p_max`, `p >= 0`) and
/// every state of charge outside `[e_min, e_max]`.
pub fn check_limits(spec: &EssSpec, sched: &EssSchedule, delta_t: f64) -> Result<(), Vec<StorageViolation>> {
    let mut out = Vec::new();
    for h in 0..sched.len() {
        let (pp, pm) = (sched.p_plus[h], sched.p_minus[h]);
        if pp < -LIMIT_TOL || pm < -LIMIT_TOL {
            out.push(StorageViolation::NegativeRate { hour: h });
        }
        if 3.0 * pp > spec.p_max_charge + LIMIT_TOL {
            out.push(StorageViolation::ChargeRate { hour: h, kw: 3.0 * pp, limit: spec.p_max_charge });
        }
        if 3.0 * pm > spec.p_max_discharge + LIMIT_TOL {
            out.push(StorageViolation::DischargeRate { hour: h, kw: 3.0 * pm, limit: spec.p_max_discharge });
        }
    }
    for (t, &e) in soc_trajectory(spec, sched, delta_t).iter().enumerate() {
        if e < spec.e_min - LIMIT_TOL {
            out.push(StorageViolation::SocBelow { hour: t, kwh: e, limit: spec.e_min });
        }
        if e > spec.e_max + LIMIT_TOL {
            out.push(StorageViolation::SocAbove { hour: t, kwh: e, limit: spec.e_max });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn spec() -> EssSpec {
        EssSpec::lossless(100.0, 30.0, 50.0)
    }

    #[test]
    fn zero_schedule_is_flat_and_feasible() {
        let s = EssSchedule::zeros(24);
        assert!(soc_trajectory(&spec(), &s, 1.0).iter().all(|&e| e == 50.0));
        assert!(check_cycle(&spec(), &s, 1.0).is_ok());
        assert!(check_limits(&spec(), &s, 1.0).is_ok());
    }

    #[test]
    fn one_hour_of_charging_applies_phase_factor() {
        let mut s = EssSchedule::zeros(24);
        s.p_plus[0] = 2.0;
        assert_eq!(soc_trajectory(&spec(), &s, 1.0)[1], 56.0);
    }

    #[test]
    fn cycle_balance() {
        let mut s = EssSchedule::zeros(24);
        for h in 0..3 {
            s.p_plus[h] = 1.0;
            s.p_minus[h + 10] = 1.0;
        }
        assert!(check_cycle(&spec(), &s, 1.0).is_ok());
        s.p_minus[12] = 0.0;
        let err = check_cycle(&spec(), &s, 1.0).unwrap_err();
        match err[0] {
            StorageViolation::CycleImbalance { net_kwh } => assert!((net_kwh - 3.0).abs() < 1e-12),
            ref other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rate_limit_uses_three_phases() {
        let mut sp = spec();
        sp.p_max_charge = 9.0;
        let mut s = EssSchedule::zeros(4);
        s.p_plus[1] = 4.0;
        let err = check_limits(&sp, &s, 1.0).unwrap_err();
        assert!(err.contains(&StorageViolation::ChargeRate { hour: 1, kw: 12.0, limit: 9.0 }));
    }

    #[test]
    fn soc_overflow_is_located() {
        // 14 hours at 4/3 kW per phase from 45 kWh reaches 45 + 56 = 101 kWh.
        let sp = EssSpec::lossless(100.0, 1000.0, 45.0);
        let mut s = EssSchedule::zeros(24);
        for h in 0..14 {
            s.p_plus[h] = 4.0 / 3.0;
        }
        for h in 14..24 {
            s.p_minus[h] = 5.6 / 3.0;
        }
        let err = check_limits(&sp, &s, 1.0).unwrap_err();
        let above: Vec<usize> = err
            .iter()
            .filter_map(|v| match v {
                StorageViolation::SocAbove { hour, .. } => Some(*hour),
                _ => None,
            })
            .collect();
        assert_eq!(above, vec![14]);
        let peak = soc_trajectory(&sp, &s, 1.0)[14];
        assert!((peak - 101.0).abs() < 1e-9);
    }

    #[test]
    fn netting_removes_simultaneity() {
        let s = EssSchedule::new(vec![2.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]);
        assert_eq!(s.simultaneous_hours(), vec![0, 2]);
        let n = s.netted();
        assert_eq!(n.p_plus, vec![1.0, 0.0, 0.0]);
        assert_eq!(n.p_minus, vec![0.0, 1.0, 0.0]);
        assert_eq!(soc_trajectory(&spec(), &s, 1.0), soc_trajectory(&spec(), &n, 1.0));
    }

    fn cyclic_schedule() -> impl Strategy<Value = EssSchedule> {
        prop::collection::vec(-3.0f64..3.0, 1..24).prop_map(|mut u| {
            let mean = u.iter().sum::<f64>() / u.len() as f64;
            u.iter_mut().for_each(|x| *x -= mean);
            EssSchedule::new(u.iter().map(|&x| x.max(0.0)).collect(), u.iter().map(|&x| (-x).max(0.0)).collect())
        })
    }

    proptest! {
        #[test]
        fn reversed_swapped_schedule_reverses_trajectory(s in cyclic_schedule()) {
            let sp = spec();
            let fwd = soc_trajectory(&sp, &s, 1.0);
            let mut pp = s.p_minus.clone();
            let mut pm = s.p_plus.clone();
            pp.reverse();
            pm.reverse();
            let back = soc_trajectory(&sp, &EssSchedule::new(pp, pm), 1.0);
            let n = fwd.len() - 1;
            for t in 0..=n {
                prop_assert!((back[t] - fwd[n - t]).abs() < 1e-9);
            }
        }

        #[test]
        fn scaling_rates_scales_excursion(s in cyclic_schedule(), alpha in 0.0f64..4.0) {
            let sp = spec();
            let base = soc_trajectory(&sp, &s, 1.0);
            let scaled = EssSchedule::new(
                s.p_plus.iter().map(|v| v * alpha).collect(),
                s.p_minus.iter().map(|v| v * alpha).collect(),
            );
            let e = soc_trajectory(&sp, &scaled, 1.0);
            for (a, b) in e.iter().zip(&base) {
                prop_assert!(((a - sp.e0) - alpha * (b - sp.e0)).abs() < 1e-9);
            }
        }

        #[test]
        fn passing_checks_keeps_soc_in_window(s in cyclic_schedule()) {
            let sp = EssSpec::lossless(60.0, 15.0, 30.0);
            if check_cycle(&sp, &s, 1.0).is_ok() && check_limits(&sp, &s, 1.0).is_ok() {
                for e in soc_trajectory(&sp, &s, 1.0) {
                    prop_assert!(e >= sp.e_min - LIMIT_TOL && e <= sp.e_max + LIMIT_TOL);
                }
            }
        }
    }
}
