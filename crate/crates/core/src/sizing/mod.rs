//! Storage siting and sizing as a mixed-integer QP: choose which candidate
//! buses receive a three-phase unit, its capacity and its hourly schedule on
//! every representative day, minimizing weighted annual losses of the
//! linearized feeder subject to storage and voltage limits.

mod bnb;
mod model;
mod study;

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::netmodel::{BusId, Network, Phase};
use crate::profiles::{ProfileSet, TimeGrid};
use crate::qpsolve::{QpError, QpSettings};
use crate::storage::{EssSchedule, EssSpec, StorageViolation};

pub use bnb::{capacity_bound, enumerate_oracle, solve_miqp, ENUMERATION_LIMIT};
pub use model::build_qp;
pub use study::{dess_row, dess_study, DessBaseline, DessOptions, DessRow, DessStudy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SizingError {
    #[error("candidate bus {0} is not in the network")]
    UnknownCandidate(BusId),
    #[error("candidate bus {0} listed twice")]
    DuplicateCandidate(BusId),
    #[error("candidate bus {0} does not carry all three phases")]
    CandidateNotThreePhase(BusId),
    #[error("{units} units requested but only {candidates} candidates")]
    TooManyUnits { units: usize, candidates: usize },
    #[error("invalid storage template: {0}")]
    InvalidTemplate(&'static str),
    #[error("invalid problem: {0}")]
    InvalidProblem(&'static str),
    #[error("binary assignment has {ones} installed units, expected {expected}")]
    BadAssignment { ones: usize, expected: usize },
    #[error("assignment covers {got} candidates, problem has {expected}")]
    AssignmentLength { expected: usize, got: usize },
    #[error("profiles do not match the time grid")]
    GridMismatch,
    #[error("voltage limit unattainable at bus {bus} phase {phase} (day {day}, hour {hour})")]
    VoltageInfeasible { bus: BusId, phase: Phase, day: usize, hour: usize },
    #[error("no storage placement satisfies the constraints")]
    Infeasible,
    #[error("QP solver failed: {0}")]
    Qp(#[from] QpError),
    #[error("QP solver stopped at the iteration limit")]
    MaxIter,
    #[error("{combinations} assignments exceed the enumeration limit of {limit}")]
    BudgetExceeded { combinations: u128, limit: usize },
    #[error("schedule at bus {bus}, day {day} fails verification: {violation}")]
    Verification { bus: BusId, day: usize, violation: StorageViolation },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Number of units to install.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EssCount {
    Fixed(usize),
    /// No cardinality constraint.
    Free,
}

/// Power rating of a unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateLimit {
    /// Three-phase rating `capacity / hours` for both directions.
    CRate { hours: f64 },
    /// Fixed three-phase ratings (kW), available only where a unit is installed.
    Fixed { charge_kw: f64, discharge_kw: f64 },
}

/// Properties shared by every unit the optimizer may install.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssTemplate {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub rate: RateLimit,
    /// Lower state-of-charge limit as a fraction of capacity.
    pub min_soc_fraction: f64,
}

impl Default for EssTemplate {
    fn default() -> Self {
        EssTemplate { eta_plus: 1.0, eta_minus: 1.0, rate: RateLimit::CRate { hours: 2.0 }, min_soc_fraction: 0.0 }
    }
}

impl EssTemplate {
    fn validate(&self) -> Result<(), SizingError> {
        let eff = |e: f64| e > 0.0 && e <= 1.0;
        if !eff(self.eta_plus) || !eff(self.eta_minus) {
            return Err(SizingError::InvalidTemplate("efficiencies must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.min_soc_fraction) {
            return Err(SizingError::InvalidTemplate("minimum state of charge must lie in [0, 1)"));
        }
        match self.rate {
            RateLimit::CRate { hours } if !(hours > 0.0 && hours.is_finite()) => {
                Err(SizingError::InvalidTemplate("C-rate hours must be positive"))
            }
            RateLimit::Fixed { charge_kw, discharge_kw }
                if !(charge_kw >= 0.0 && discharge_kw >= 0.0 && charge_kw.is_finite() && discharge_kw.is_finite()) =>
            {
                Err(SizingError::InvalidTemplate("fixed ratings must be finite and non-negative"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_lossless(&self) -> bool {
        self.eta_plus == 1.0 && self.eta_minus == 1.0
    }

    /// Storage parameters of an installed unit.
    pub fn spec(&self, capacity_kwh: f64, e0_kwh: f64) -> EssSpec {
        let (pc, pd) = self.ratings(capacity_kwh);
        EssSpec {
            eta_plus: self.eta_plus,
            eta_minus: self.eta_minus,
            p_max_charge: pc,
            p_max_discharge: pd,
            e_min: self.min_soc_fraction * capacity_kwh,
            e_max: capacity_kwh,
            e0: e0_kwh,
        }
    }

    /// Three-phase (charge, discharge) ratings for a unit of `capacity` kWh.
    pub fn ratings(&self, capacity: f64) -> (f64, f64) {
        match self.rate {
            RateLimit::CRate { hours } => (capacity / hours, capacity / hours),
            RateLimit::Fixed { charge_kw, discharge_kw } => (charge_kw, discharge_kw),
        }
    }
}

/// Installation binary of one candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinaryState {
    Relaxed,
    Fixed(bool),
}

#[derive(Clone, Debug)]
pub struct SizingProblem {
    pub net: Network,
    pub profiles: ProfileSet,
    pub grid: TimeGrid,
    pub candidates: Vec<BusId>,
    pub n_ess: EssCount,
    /// Total capacity shared by all units (kWh), when set.
    pub aggregate_cap: Option<f64>,
    /// Per-unit capacity bound (kWh); `None` derives it from a single-unit solve.
    pub capacity_bound: Option<f64>,
    pub template: EssTemplate,
    /// Objective weight per installed kWh, picking the smallest capacity
    /// among loss-equivalent ones.
    pub capacity_penalty: f64,
    pub qp: QpSettings,
    pub node_limit: usize,
}

impl SizingProblem {
    pub fn new(net: Network, profiles: ProfileSet, grid: TimeGrid, candidates: Vec<BusId>, n_ess: EssCount) -> Self {
        SizingProblem {
            net,
            profiles,
            grid,
            candidates,
            n_ess,
            aggregate_cap: None,
            capacity_bound: None,
            template: EssTemplate::default(),
            capacity_penalty: 1e-4,
            qp: QpSettings::default(),
            node_limit: 100_000,
        }
    }

    /// Checks the problem invariants and returns candidate bus indices.
    pub fn validate(&self) -> Result<Vec<usize>, SizingError> {
        self.template.validate()?;
        let mut idx = Vec::with_capacity(self.candidates.len());
        for (k, &c) in self.candidates.iter().enumerate() {
            if self.candidates[..k].contains(&c) {
                return Err(SizingError::DuplicateCandidate(c));
            }
            let i = self.net.bus_index(c).ok_or(SizingError::UnknownCandidate(c))?;
            if self.net.buses()[i].phases != crate::netmodel::PhaseSet::ABC {
                return Err(SizingError::CandidateNotThreePhase(c));
            }
            idx.push(i);
        }
        if let EssCount::Fixed(n) = self.n_ess {
            if n > self.candidates.len() {
                return Err(SizingError::TooManyUnits { units: n, candidates: self.candidates.len() });
            }
        }
        if let Some(m) = self.capacity_bound {
            if !(m > 0.0 && m.is_finite()) {
                return Err(SizingError::InvalidProblem("capacity bound must be positive"));
            }
        }
        if let Some(a) = self.aggregate_cap {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(SizingError::InvalidProblem("aggregate capacity must be non-negative"));
            }
        }
        if !(self.capacity_penalty >= 0.0 && self.capacity_penalty.is_finite()) {
            return Err(SizingError::InvalidProblem("capacity penalty must be non-negative"));
        }
        if self.profiles.hours_per_day() != self.grid.hours_per_day()
            || self.profiles.day_count() != self.grid.day_count()
        {
            return Err(SizingError::GridMismatch);
        }
        if self.grid.hours_per_day() < 1 {
            return Err(SizingError::GridMismatch);
        }
        Ok(idx)
    }
}

/// One installed unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub bus: BusId,
    pub capacity_kwh: f64,
    pub e0_kwh: f64,
    /// One schedule per representative day, in grid order.
    pub schedules: Vec<EssSchedule>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverStats {
    pub nodes: usize,
    pub qp_solves: usize,
    pub qp_iterations: usize,
    /// Lowest relaxation bound still open when the search stopped.
    pub best_bound: f64,
    /// Filled in by callers with a clock.
    pub wall_time_s: Option<f64>,
    /// Free-form notes, e.g. the derived capacity bound.
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizingSolution {
    /// Installed units in ascending bus-id order.
    pub placements: Vec<Placement>,
    /// Weighted annual losses of the linearized feeder (kWh).
    pub objective_kwh: f64,
    /// Losses plus the capacity penalty, as minimized.
    pub qp_objective: f64,
    pub capacity_bound_kwh: f64,
    pub stats: SolverStats,
    pub optimality_gap: f64,
}

impl SizingSolution {
    pub fn total_capacity(&self) -> f64 {
        self.placements.iter().map(|p| p.capacity_kwh).sum()
    }

    pub fn buses(&self) -> Vec<BusId> {
        self.placements.iter().map(|p| p.bus).collect()
    }
}

#[cfg(test)]
mod tests;
