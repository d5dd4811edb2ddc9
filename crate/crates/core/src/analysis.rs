//! Feeder performance indices from exact power flow: weighted annual
//! losses, PV hosting capacity and voltage unbalance factor.

use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
use thiserror::Error;

use crate::math;
use crate::netmodel::{BusId, Network, Phase, PhaseSet};
use crate::powerflow::{solve_exact, Injection, PowerFlowError, PowerFlowSolution, SweepOptions};
use crate::profiles::{ProfileSet, TimeGrid};
use crate::sizing::Placement;

/// PV scaling beyond which the hosting search gives up.
pub const HOSTING_ALPHA_MAX: f64 = 1e4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("power flow did not converge on day {day}, hour {hour}")]
    NotConverged { day: usize, hour: usize },
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error("storage placed at unknown bus {0}")]
    UnknownBus(BusId),
    #[error("storage at bus {bus} needs {days} daily schedules of {hours} hours")]
    ScheduleShape { bus: BusId, days: usize, hours: usize },
    #[error("profiles do not match the time grid")]
    GridMismatch,
    #[error("day index {0} is outside the time grid")]
    UnknownDay(usize),
    #[error("tolerance must be positive")]
    InvalidTolerance,
    #[error("base case already exceeds the upper voltage limit at bus {bus} phase {phase}, hour {hour} ({volts} V)")]
    BaseCaseViolation { bus: BusId, phase: Phase, hour: usize, volts: f64 },
    #[error("no voltage violation up to PV scaling {alpha}")]
    SearchExhausted { alpha: f64 },
    #[error("bus {0} does not carry all three phases")]
    NotThreePhase(BusId),
    #[error("positive-sequence voltage is zero at bus {0}; unbalance factor undefined")]
    Undefined(BusId),
}

fn check_grid(profiles: &ProfileSet, grid: &TimeGrid) -> Result<(), AnalysisError> {
    if profiles.hours_per_day() != grid.hours_per_day() || profiles.day_count() != grid.day_count() {
        return Err(AnalysisError::GridMismatch);
    }
    Ok(())
}

fn resolve_placements<'a>(
    net: &Network,
    grid: &TimeGrid,
    placements: &'a [Placement],
) -> Result<Vec<(usize, &'a Placement)>, AnalysisError> {
    placements
        .iter()
        .map(|p| {
            let i = net.bus_index(p.bus).ok_or(AnalysisError::UnknownBus(p.bus))?;
            let shape_ok =
                p.schedules.len() == grid.day_count() && p.schedules.iter().all(|s| s.len() == grid.hours_per_day());
            if !shape_ok {
                return Err(AnalysisError::ScheduleShape {
                    bus: p.bus,
                    days: grid.day_count(),
                    hours: grid.hours_per_day(),
                });
            }
            Ok((i, p))
        })
        .collect()
}

fn injection(
    net: &Network,
    profiles: &ProfileSet,
    units: &[(usize, &Placement)],
    hours: usize,
    day: usize,
    hour: usize,
    pv_scale: f64,
) -> Injection {
    let mut inj = Injection::from_profiles(net, profiles, day * hours + hour, pv_scale);
    for (i, p) in units {
        let s = &p.schedules[day];
        inj.add_balanced(*i, s.p_plus[hour] - s.p_minus[hour]);
    }
    inj
}

fn converged(
    net: &Network,
    inj: &Injection,
    opts: &SweepOptions,
    day: usize,
    hour: usize,
) -> Result<PowerFlowSolution, AnalysisError> {
    let sol = solve_exact(net, inj, opts)?;
    if !sol.converged {
        return Err(AnalysisError::NotConverged { day, hour });
    }
    Ok(sol)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnualLosses {
    pub annual_kwh: f64,
    /// Weighted contribution of each representative day.
    pub per_day_kwh: Vec<f64>,
    /// Per season, in order of first appearance in the grid.
    pub seasonal_kwh: Vec<(String, f64)>,
}

/// Exact losses at every represented hour with storage injections
/// superimposed, integrated over the hour and weighted by day weight.
pub fn annual_losses(
    net: &Network,
    profiles: &ProfileSet,
    grid: &TimeGrid,
    placements: &[Placement],
    opts: &SweepOptions,
) -> Result<AnnualLosses, AnalysisError> {
    check_grid(profiles, grid)?;
    let units = resolve_placements(net, grid, placements)?;
    let hours = grid.hours_per_day();
    let mut per_day = Vec::with_capacity(grid.day_count());
    for (d, day) in grid.days().iter().enumerate() {
        let mut e = 0.0;
        for t in 0..hours {
            let sol = converged(net, &injection(net, profiles, &units, hours, d, t, 1.0), opts, d, t)?;
            e += sol.total_loss * grid.delta_t();
        }
        per_day.push(e * day.weight);
    }
    let mut seasonal: Vec<(String, f64)> = Vec::new();
    for (day, e) in grid.days().iter().zip(&per_day) {
        match seasonal.iter_mut().find(|(s, _)| *s == day.season) {
            Some((_, v)) => *v += e,
            None => seasonal.push((day.season.clone(), *e)),
        }
    }
    Ok(AnnualLosses { annual_kwh: per_day.iter().sum(), per_day_kwh: per_day, seasonal_kwh: seasonal })
}

/// Where the upper voltage limit is exceeded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Binding {
    pub bus: BusId,
    pub phase: Phase,
    pub hour: usize,
    pub volts: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HostingResult {
    /// Day index the search ran on.
    pub day: usize,
    /// PV scaling at the threshold.
    pub alpha: f64,
    /// Total feeder PV rating at the threshold (kW).
    pub hosting_kw: f64,
    /// Rating of the largest PV system at the threshold (kW).
    pub per_system_kw: f64,
    /// Highest over-voltage just above the threshold; `None` without PV or
    /// when the power flow diverged there.
    pub binding: Option<Binding>,
    pub power_flows: usize,
}

enum Outcome {
    Within,
    Exceeds(Option<Binding>),
}

#[allow(clippy::too_many_arguments)]
fn over_voltage(
    net: &Network,
    profiles: &ProfileSet,
    units: &[(usize, &Placement)],
    hours: usize,
    day: usize,
    alpha: f64,
    opts: &SweepOptions,
    flows: &mut usize,
) -> Result<Outcome, AnalysisError> {
    let v_max = net.v_max_pu();
    let mut worst: Option<(f64, Binding)> = None;
    for t in 0..hours {
        let sol = solve_exact(net, &injection(net, profiles, units, hours, day, t, alpha), opts)?;
        *flows += 1;
        if !sol.converged {
            return Ok(Outcome::Exceeds(None));
        }
        for (b, bus) in net.buses().iter().enumerate() {
            for f in bus.phases.iter() {
                let v = sol.magnitude_pu(b, f);
                if v > v_max && worst.is_none_or(|(w, _)| v > w) {
                    let volts = sol.magnitude_volts(b, f);
                    worst = Some((v, Binding { bus: bus.id, phase: f, hour: t, volts }));
                }
            }
        }
    }
    Ok(match worst {
        Some((_, b)) => Outcome::Exceeds(Some(b)),
        None => Outcome::Within,
    })
}

/// Largest uniform PV scaling on `day` before any bus phase exceeds the
/// upper voltage limit, found by bisection to `tol_kw` on the largest
/// system's rating. Storage schedules stay as given.
pub fn hosting_capacity(
    net: &Network,
    profiles: &ProfileSet,
    grid: &TimeGrid,
    day: usize,
    placements: &[Placement],
    tol_kw: f64,
    opts: &SweepOptions,
) -> Result<HostingResult, AnalysisError> {
    check_grid(profiles, grid)?;
    if tol_kw.is_nan() || tol_kw <= 0.0 {
        return Err(AnalysisError::InvalidTolerance);
    }
    if day >= grid.day_count() {
        return Err(AnalysisError::UnknownDay(day));
    }
    let units = resolve_placements(net, grid, placements)?;
    let hours = grid.hours_per_day();
    let ratings: Vec<f64> = profiles.pv_ratings().into_iter().map(|(_, r)| r).collect();
    let r_max = ratings.iter().fold(0.0f64, |m, &r| m.max(r));
    let r_total: f64 = ratings.iter().sum();
    let mut flows = 0;
    if r_max <= 0.0 {
        return Ok(HostingResult {
            day,
            alpha: 0.0,
            hosting_kw: 0.0,
            per_system_kw: 0.0,
            binding: None,
            power_flows: 0,
        });
    }

    match over_voltage(net, profiles, &units, hours, day, 1.0, opts, &mut flows)? {
        Outcome::Within => {}
        Outcome::Exceeds(Some(b)) => {
            return Err(AnalysisError::BaseCaseViolation { bus: b.bus, phase: b.phase, hour: b.hour, volts: b.volts })
        }
        Outcome::Exceeds(None) => return Err(AnalysisError::NotConverged { day, hour: 0 }),
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    let mut binding;
    loop {
        match over_voltage(net, profiles, &units, hours, day, hi, opts, &mut flows)? {
            Outcome::Within => {
                lo = hi;
                hi *= 2.0;
                if hi > HOSTING_ALPHA_MAX {
                    return Err(AnalysisError::SearchExhausted { alpha: lo });
                }
            }
            Outcome::Exceeds(b) => {
                binding = b;
                break;
            }
        }
    }
    while (hi - lo) * r_max > tol_kw {
        let mid = 0.5 * (lo + hi);
        match over_voltage(net, profiles, &units, hours, day, mid, opts, &mut flows)? {
            Outcome::Within => lo = mid,
            Outcome::Exceeds(b) => {
                hi = mid;
                binding = b;
            }
        }
    }
    Ok(HostingResult {
        day,
        alpha: lo,
        hosting_kw: lo * r_total,
        per_system_kw: lo * r_max,
        binding,
        power_flows: flows,
    })
}

/// Positive- and negative-sequence magnitudes `|Va + a Vb + a² Vc| / 3` and
/// `|Va + a² Vb + a Vc| / 3` with `a = 1∠120°`.
pub fn sequence_magnitudes(va: Complex64, vb: Complex64, vc: Complex64) -> (f64, f64) {
    let a = Complex64::new(-0.5, 0.5 * math::sqrt(3.0));
    let a2 = a * a;
    ((va + a * vb + a2 * vc).norm() / 3.0, (va + a2 * vb + a * vc).norm() / 3.0)
}

/// `100 v⁻ / v⁺`, or `None` when `v⁺` is not positive.
pub fn vuf_from_sequence(v_pos: f64, v_neg: f64) -> Option<f64> {
    (v_pos > 0.0).then(|| 100.0 * v_neg / v_pos)
}

/// Unbalance factor of a phasor triple; `None` when the positive sequence
/// vanishes relative to the phase magnitudes.
pub fn vuf_phasors(va: Complex64, vb: Complex64, vc: Complex64) -> Option<f64> {
    let (vp, vn) = sequence_magnitudes(va, vb, vc);
    let scale = va.norm() + vb.norm() + vc.norm();
    if vp <= 1e-12 * scale || scale == 0.0 {
        return None;
    }
    vuf_from_sequence(vp, vn)
}

/// Unbalance factor (%) at a three-phase bus of a solved feeder.
pub fn vuf(net: &Network, sol: &PowerFlowSolution, bus: BusId) -> Result<f64, AnalysisError> {
    let i = net.bus_index(bus).ok_or(AnalysisError::UnknownBus(bus))?;
    if net.buses()[i].phases != PhaseSet::ABC {
        return Err(AnalysisError::NotThreePhase(bus));
    }
    let v = sol.voltages[i];
    vuf_phasors(v[0], v[1], v[2]).ok_or(AnalysisError::Undefined(bus))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VufSample {
    pub day: usize,
    pub hour: usize,
    pub bus: BusId,
    pub vuf_percent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VufStudy {
    pub max_percent: f64,
    /// `(bus, day, hour)` of the maximum.
    pub max_at: Option<(BusId, usize, usize)>,
    /// Mean over three-phase buses and hours, days weighted by their weight.
    pub avg_percent: f64,
    pub series: Vec<VufSample>,
}

/// Unbalance factor at every three-phase bus below the substation for every
/// represented hour.
pub fn vuf_study(
    net: &Network,
    profiles: &ProfileSet,
    grid: &TimeGrid,
    placements: &[Placement],
    opts: &SweepOptions,
) -> Result<VufStudy, AnalysisError> {
    check_grid(profiles, grid)?;
    let units = resolve_placements(net, grid, placements)?;
    let hours = grid.hours_per_day();
    let root = net.root_index();
    let buses: Vec<usize> =
        (0..net.bus_count()).filter(|&b| b != root && net.buses()[b].phases == PhaseSet::ABC).collect();
    let mut series = Vec::with_capacity(grid.steps() * buses.len());
    let mut max_percent = 0.0;
    let mut max_at = None;
    let mut weighted = 0.0;
    let mut weight = 0.0;
    for (d, day) in grid.days().iter().enumerate() {
        for t in 0..hours {
            let sol = converged(net, &injection(net, profiles, &units, hours, d, t, 1.0), opts, d, t)?;
            for &b in &buses {
                let id = net.buses()[b].id;
                let v = sol.voltages[b];
                let u = vuf_phasors(v[0], v[1], v[2]).ok_or(AnalysisError::Undefined(id))?;
                if max_at.is_none() || u > max_percent {
                    max_percent = u;
                    max_at = Some((id, d, t));
                }
                weighted += day.weight * u;
                weight += day.weight;
                series.push(VufSample { day: d, hour: t, bus: id, vuf_percent: u });
            }
        }
    }
    let avg_percent = if weight > 0.0 { weighted / weight } else { 0.0 };
    Ok(VufStudy { max_percent, max_at, avg_percent, series })
}

/// The three indices for one storage configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexReport {
    pub losses: AnnualLosses,
    pub hosting: HostingResult,
    pub vuf: VufStudy,
}

pub fn index_report(
    net: &Network,
    profiles: &ProfileSet,
    grid: &TimeGrid,
    placements: &[Placement],
    hosting_day: usize,
    hosting_tol_kw: f64,
    opts: &SweepOptions,
) -> Result<IndexReport, AnalysisError> {
    Ok(IndexReport {
        losses: annual_losses(net, profiles, grid, placements, opts)?,
        hosting: hosting_capacity(net, profiles, grid, hosting_day, placements, hosting_tol_kw, opts)?,
        vuf: vuf_study(net, profiles, grid, placements, opts)?,
    })
}
