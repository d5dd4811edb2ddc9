//! Sizing and placement of community (CESS) and distributed (DESS) energy
//! storage on unbalanced three-phase low-voltage radial feeders.
//!
//! The crate is `no_std` + `alloc`. File formats, configuration and the
//! command-line driver live in the `gridstor` companion crate.
//!
//! Units: the public surface speaks SI-ish engineering units (volts, ohms,
//! kW, kvar, kWh). Internally every solver works in per-unit with a
//! per-phase power base of 1 kVA and the feeder's base voltage, so a
//! per-unit power is numerically a kW.

#![cfg_attr(not(test), no_std)]
// numeric kernels index several parallel arrays at once
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod analysis;
mod math;
pub mod netmodel;
pub mod powerflow;
pub mod profiles;
pub mod qpsolve;
pub mod sizing;
pub mod storage;

pub use analysis::{
    annual_losses, hosting_capacity, index_report, vuf, vuf_from_sequence, vuf_phasors, vuf_study, AnalysisError,
    AnnualLosses, Binding, HostingResult, IndexReport, VufSample, VufStudy,
};
pub use netmodel::{
    downstream_sets, validate_radial, Bus, BusId, Line, Network, NetworkError, Phase, PhaseSet, PhaseTriple,
    RadialViolation, Source,
};
pub use num_complex::Complex64;
pub use powerflow::{
    branch_losses, distflow_residual, lin_flows, lin_voltages, solve_exact, Injection, LineFlows, LossReport,
    PowerFlowError, PowerFlowSolution, SweepOptions,
};
pub use profiles::{
    scale_pv, synth_profiles, DaySpec, PhaseProfile, ProfileError, ProfileRecord, ProfileSet, PvScaling, SeasonShape,
    SynthParams, TimeGrid,
};
pub use qpsolve::{
    kkt_residuals, solve_qp, CscMatrix, QpBuilder, QpError, QpProblem, QpSettings, QpSolution, QpStatus,
};
pub use sizing::{
    build_qp, capacity_bound, dess_row, dess_study, enumerate_oracle, solve_miqp, BinaryState, DessBaseline,
    DessOptions, DessRow, DessStudy, EssCount, EssTemplate, Placement, RateLimit, SizingError, SizingProblem,
    SizingSolution, SolverStats,
};
pub use storage::{check_cycle, check_limits, soc_trajectory, EssSchedule, EssSpec, StorageViolation};
