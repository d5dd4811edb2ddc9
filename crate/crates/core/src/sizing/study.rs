// Distributed storage study: a fixed total capacity split over N units,
// each configuration scored with exact power flow.

use alloc::vec::Vec;

use super::bnb::{capacity_bound, solve_miqp};
use super::{EssCount, SizingError, SizingProblem, SizingSolution};
use crate::analysis::{annual_losses, hosting_capacity, vuf_study};
use crate::netmodel::BusId;
use crate::powerflow::SweepOptions;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DessOptions {
    /// Representative day used for the hosting search.
    pub hosting_day: usize,
    pub hosting_tol_kw: f64,
    pub sweep: SweepOptions,
}

impl Default for DessOptions {
    fn default() -> Self {
        DessOptions { hosting_day: 0, hosting_tol_kw: 0.01, sweep: SweepOptions::default() }
    }
}

/// Indices of the feeder without storage.
#[derive(Clone, Debug, PartialEq)]
pub struct DessBaseline {
    pub annual_loss_kwh: f64,
    pub hosting_kw: f64,
    pub vuf_max_percent: f64,
    pub vuf_avg_percent: f64,
}

impl DessBaseline {
    pub fn compute(prob: &SizingProblem, opts: &DessOptions) -> Result<Self, SizingError> {
        let (net, prof, grid) = (&prob.net, &prob.profiles, &prob.grid);
        let losses = annual_losses(net, prof, grid, &[], &opts.sweep)?;
        let hosting = hosting_capacity(net, prof, grid, opts.hosting_day, &[], opts.hosting_tol_kw, &opts.sweep)?;
        let vuf = vuf_study(net, prof, grid, &[], &opts.sweep)?;
        Ok(DessBaseline {
            annual_loss_kwh: losses.annual_kwh,
            hosting_kw: hosting.hosting_kw,
            vuf_max_percent: vuf.max_percent,
            vuf_avg_percent: vuf.avg_percent,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DessRow {
    pub n: usize,
    pub buses: Vec<BusId>,
    pub capacities_kwh: Vec<f64>,
    /// Linearized weighted annual losses, as optimized.
    pub objective_kwh: f64,
    /// Exact weighted annual losses with the optimized schedules.
    pub annual_loss_kwh: f64,
    pub loss_reduction_percent: f64,
    pub hosting_kw: f64,
    pub hosting_increase_percent: f64,
    pub vuf_max_percent: f64,
    pub vuf_avg_percent: f64,
    pub solution: SizingSolution,
}

fn percent_change(base: f64, new: f64) -> f64 {
    if base.abs() > 0.0 {
        100.0 * (new - base) / base
    } else {
        0.0
    }
}

/// Optimal placement of `n` units, sharing the aggregate capacity when the
/// problem sets one.
pub fn dess_row(
    prob: &SizingProblem,
    n: usize,
    base: &DessBaseline,
    opts: &DessOptions,
) -> Result<DessRow, SizingError> {
    let mut p = prob.clone();
    p.n_ess = EssCount::Fixed(n);
    let sol = solve_miqp(&p)?;
    let (net, prof, grid) = (&p.net, &p.profiles, &p.grid);
    let losses = annual_losses(net, prof, grid, &sol.placements, &opts.sweep)?;
    let hosting =
        hosting_capacity(net, prof, grid, opts.hosting_day, &sol.placements, opts.hosting_tol_kw, &opts.sweep)?;
    let vuf = vuf_study(net, prof, grid, &sol.placements, &opts.sweep)?;
    Ok(DessRow {
        n,
        buses: sol.buses(),
        capacities_kwh: sol.placements.iter().map(|q| q.capacity_kwh).collect(),
        objective_kwh: sol.objective_kwh,
        annual_loss_kwh: losses.annual_kwh,
        loss_reduction_percent: -percent_change(base.annual_loss_kwh, losses.annual_kwh),
        hosting_kw: hosting.hosting_kw,
        hosting_increase_percent: percent_change(base.hosting_kw, hosting.hosting_kw),
        vuf_max_percent: vuf.max_percent,
        vuf_avg_percent: vuf.avg_percent,
        solution: sol,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DessStudy {
    pub baseline: DessBaseline,
    pub rows: Vec<DessRow>,
}

/// One row per unit count, all sharing one capacity bound so the rows are
/// comparable. Without an aggregate capacity each row sizes freely.
pub fn dess_study(prob: &SizingProblem, n_values: &[usize], opts: &DessOptions) -> Result<DessStudy, SizingError> {
    let mut p = prob.clone();
    p.capacity_bound = Some(capacity_bound(prob)?);
    let baseline = DessBaseline::compute(&p, opts)?;
    let rows = n_values.iter().map(|&n| dess_row(&p, n, &baseline, opts)).collect::<Result<_, _>>()?;
    Ok(DessStudy { baseline, rows })
}
