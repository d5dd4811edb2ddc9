//! Hourly per-phase load and PV profiles over weighted representative days.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::math;
use crate::netmodel::{BusId, Network, Phase};

/// Days per year the representative-day weights must add up to.
pub const DAYS_PER_YEAR: f64 = 365.0;
const WEIGHT_SLACK: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("time grid: {0}")]
    Grid(String),
    #[error("bus {bus} phase {phase}: no profile series although the bus has a load or PV flag there")]
    MissingSeries { bus: BusId, phase: Phase },
    #[error("bus {bus} phase {phase}: expected {expected} hourly rows, found {found}")]
    LengthMismatch { bus: BusId, phase: Phase, expected: usize, found: usize },
    #[error("bus {bus} phase {phase} day {day} hour {hour}: duplicate row")]
    DuplicateRow { bus: BusId, phase: Phase, day: usize, hour: usize },
    #[error("bus {bus} phase {phase}: negative load {value} kW")]
    NegativeLoad { bus: BusId, phase: Phase, value: f64 },
    #[error("bus {bus} phase {phase}: negative PV {value} kW")]
    NegativePv { bus: BusId, phase: Phase, value: f64 },
    #[error("bus {bus} phase {phase}: non-finite value")]
    NonFinite { bus: BusId, phase: Phase },
    #[error("bus {bus} is not in the network")]
    UnknownBus { bus: BusId },
    #[error("bus {bus} has no phase {phase}")]
    AbsentPhase { bus: BusId, phase: Phase },
    #[error("bus {bus} phase {phase}: {what} given on a phase without that flag")]
    Unflagged { bus: BusId, phase: Phase, what: &'static str },
    #[error("row index out of range (day {day}, hour {hour})")]
    OutOfRange { day: usize, hour: usize },
    #[error("invalid season parameters: {0}")]
    InvalidParams(String),
    #[error("PV scaling factor must be finite and non-negative, got {0}")]
    InvalidScaling(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DaySpec {
    pub id: String,
    pub season: String,
    /// Days per year this representative day stands for.
    pub weight: f64,
}

impl DaySpec {
    pub fn new(id: &str, season: &str, weight: f64) -> Self {
        DaySpec { id: id.into(), season: season.into(), weight }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    hours_per_day: usize,
    delta_t: f64,
    days: Vec<DaySpec>,
}

impl TimeGrid {
    pub fn new(hours_per_day: usize, delta_t: f64, days: Vec<DaySpec>) -> Result<Self, ProfileError> {
        if hours_per_day == 0 {
            return Err(ProfileError::Grid("hours_per_day must be positive".into()));
        }
        if !(delta_t.is_finite() && delta_t > 0.0) {
            return Err(ProfileError::Grid("delta_t must be positive".into()));
        }
        if days.is_empty() {
            return Err(ProfileError::Grid("at least one representative day is required".into()));
        }
        let mut total = 0.0;
        for (i, d) in days.iter().enumerate() {
            if !(d.weight.is_finite() && d.weight >= 0.0) {
                return Err(ProfileError::Grid(alloc::format!("day {} has an invalid weight", d.id)));
            }
            if days[..i].iter().any(|o| o.id == d.id) {
                return Err(ProfileError::Grid(alloc::format!("duplicate day id {}", d.id)));
            }
            total += d.weight;
        }
        if math::abs(total - DAYS_PER_YEAR) > WEIGHT_SLACK {
            return Err(ProfileError::Grid(alloc::format!("day weights add up to {total}, expected {DAYS_PER_YEAR}")));
        }
        Ok(TimeGrid { hours_per_day, delta_t, days })
    }

    /// Hourly grid with one representative day per season weighted
    /// summer 90, autumn 91, winter 92, spring 92.
    pub fn four_seasons() -> Self {
        let days = vec![
            DaySpec::new("summer", "summer", 90.0),
            DaySpec::new("autumn", "autumn", 91.0),
            DaySpec::new("winter", "winter", 92.0),
            DaySpec::new("spring", "spring", 92.0),
        ];
        TimeGrid::new(24, 1.0, days).expect("default grid is valid")
    }

    pub fn hours_per_day(&self) -> usize {
        self.hours_per_day
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn days(&self) -> &[DaySpec] {
        &self.days
    }

    pub fn day_count(&self) -> usize {
        self.days.len()
    }

    pub fn day_index(&self, id: &str) -> Option<usize> {
        self.days.iter().position(|d| d.id == id)
    }

    pub fn steps(&self) -> usize {
        self.days.len() * self.hours_per_day
    }
}

/// Hourly series for one (bus, phase), indexed `day * hours_per_day + hour`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseProfile {
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
    pub p_pv: Vec<f64>,
    pub q_pv: Vec<f64>,
}

impl PhaseProfile {
    fn zeros(len: usize) -> Self {
        PhaseProfile { p_load: vec![0.0; len], q_load: vec![0.0; len], p_pv: vec![0.0; len], q_pv: vec![0.0; len] }
    }

    /// Largest hourly PV output, used as the system's rating.
    pub fn pv_rating(&self) -> f64 {
        self.p_pv.iter().fold(0.0, |m, &x| m.max(x))
    }
}

/// One row of a profile file. `day` is an index into the time grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileRecord {
    pub bus: BusId,
    pub phase: Phase,
    pub day: usize,
    pub hour: usize,
    pub p_load: f64,
    pub q_load: f64,
    pub p_pv: f64,
    pub q_pv: f64,
}

/// Complete per-(bus, phase) load and PV data (kW / kvar). Only connections
/// carrying a load or PV flag have a series.
///
/// PV is held unscaled next to a multiplier, so repeated scaling composes
/// by multiplying factors rather than by rounding every sample twice.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSet {
    hours_per_day: usize,
    days: usize,
    series: BTreeMap<(BusId, Phase), PhaseProfile>,
    pv_scale: f64,
}

impl ProfileSet {
    /// Assembles and validates a profile set from file rows.
    pub fn from_records(
        net: &Network,
        grid: &TimeGrid,
        records: impl IntoIterator<Item = ProfileRecord>,
    ) -> Result<ProfileSet, ProfileError> {
        let h = grid.hours_per_day();
        let len = grid.steps();
        let mut series: BTreeMap<(BusId, Phase), (PhaseProfile, Vec<bool>)> = BTreeMap::new();
        for r in records {
            let bus = net.bus(r.bus).ok_or(ProfileError::UnknownBus { bus: r.bus })?;
            if !bus.phases.contains(r.phase) {
                return Err(ProfileError::AbsentPhase { bus: r.bus, phase: r.phase });
            }
            if r.day >= grid.day_count() || r.hour >= h {
                return Err(ProfileError::OutOfRange { day: r.day, hour: r.hour });
            }
            let vals = [r.p_load, r.q_load, r.p_pv, r.q_pv];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(ProfileError::NonFinite { bus: r.bus, phase: r.phase });
            }
            if r.p_load < 0.0 {
                return Err(ProfileError::NegativeLoad { bus: r.bus, phase: r.phase, value: r.p_load });
            }
            if r.p_pv < 0.0 {
                return Err(ProfileError::NegativePv { bus: r.bus, phase: r.phase, value: r.p_pv });
            }
            if !bus.load.contains(r.phase) && (r.p_load != 0.0 || r.q_load != 0.0) {
                return Err(ProfileError::Unflagged { bus: r.bus, phase: r.phase, what: "load" });
            }
            if !bus.pv.contains(r.phase) && (r.p_pv != 0.0 || r.q_pv != 0.0) {
                return Err(ProfileError::Unflagged { bus: r.bus, phase: r.phase, what: "PV" });
            }
            let (prof, seen) =
                series.entry((r.bus, r.phase)).or_insert_with(|| (PhaseProfile::zeros(len), vec![false; len]));
            let k = r.day * h + r.hour;
            if seen[k] {
                return Err(ProfileError::DuplicateRow { bus: r.bus, phase: r.phase, day: r.day, hour: r.hour });
            }
            seen[k] = true;
            prof.p_load[k] = r.p_load;
            prof.q_load[k] = r.q_load;
            prof.p_pv[k] = r.p_pv;
            prof.q_pv[k] = r.q_pv;
        }
        let mut out = BTreeMap::new();
        for (key, (prof, seen)) in series {
            let found = seen.iter().filter(|&&s| s).count();
            if found != len {
                return Err(ProfileError::LengthMismatch { bus: key.0, phase: key.1, expected: len, found });
            }
            out.insert(key, prof);
        }
        for bus in net.buses() {
            for phase in bus.phases.iter() {
                if (bus.load.contains(phase) || bus.pv.contains(phase)) && !out.contains_key(&(bus.id, phase)) {
                    return Err(ProfileError::MissingSeries { bus: bus.id, phase });
                }
            }
        }
        Ok(ProfileSet { hours_per_day: h, days: grid.day_count(), series: out, pv_scale: 1.0 })
    }

    /// Empty profile set (no load, no PV) shaped for `grid`.
    pub fn empty(grid: &TimeGrid) -> Self {
        ProfileSet {
            hours_per_day: grid.hours_per_day(),
            days: grid.day_count(),
            series: BTreeMap::new(),
            pv_scale: 1.0,
        }
    }

    pub fn hours_per_day(&self) -> usize {
        self.hours_per_day
    }

    pub fn day_count(&self) -> usize {
        self.days
    }

    /// Series of one connection with the PV multiplier applied.
    pub fn get(&self, bus: BusId, phase: Phase) -> Option<PhaseProfile> {
        self.series.get(&(bus, phase)).map(|p| self.scaled(p))
    }

    fn scaled(&self, p: &PhaseProfile) -> PhaseProfile {
        let s = self.pv_scale;
        PhaseProfile {
            p_load: p.p_load.clone(),
            q_load: p.q_load.clone(),
            p_pv: p.p_pv.iter().map(|v| s * v).collect(),
            q_pv: p.q_pv.iter().map(|v| s * v).collect(),
        }
    }

    /// Multiplier applied to the PV values yielded by [`ProfileSet::iter_unscaled`].
    pub fn pv_scale(&self) -> f64 {
        self.pv_scale
    }

    /// Stored series; PV still has to be multiplied by [`ProfileSet::pv_scale`].
    pub fn iter_unscaled(&self) -> impl Iterator<Item = (&(BusId, Phase), &PhaseProfile)> {
        self.series.iter()
    }

    /// Rows in (bus, phase, day, hour) order.
    pub fn records(&self) -> impl Iterator<Item = ProfileRecord> + '_ {
        let h = self.hours_per_day;
        let s = self.pv_scale;
        self.series.iter().flat_map(move |(&(bus, phase), p)| {
            (0..p.p_load.len()).map(move |k| ProfileRecord {
                bus,
                phase,
                day: k / h,
                hour: k % h,
                p_load: p.p_load[k],
                q_load: p.q_load[k],
                p_pv: s * p.p_pv[k],
                q_pv: s * p.q_pv[k],
            })
        })
    }

    /// Weighted annual energy: (load kWh, PV kWh).
    pub fn annual_energy_kwh(&self, grid: &TimeGrid) -> (f64, f64) {
        let h = self.hours_per_day;
        let mut load = 0.0;
        let mut pv = 0.0;
        for p in self.series.values() {
            for (k, (&l, &g)) in p.p_load.iter().zip(&p.p_pv).enumerate() {
                let w = grid.days()[k / h].weight * grid.delta_t();
                load += w * l;
                pv += w * (self.pv_scale * g);
            }
        }
        (load, pv)
    }

    /// Rating of every PV system (its peak hourly output), in key order.
    pub fn pv_ratings(&self) -> Vec<((BusId, Phase), f64)> {
        self.series.iter().map(|(&k, p)| (k, self.pv_scale * p.pv_rating())).filter(|(_, r)| *r > 0.0).collect()
    }
}

/// Uniform multiplier on every PV rating.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PvScaling {
    alpha: f64,
}

impl PvScaling {
    pub fn new(alpha: f64) -> Result<Self, ProfileError> {
        if alpha.is_finite() && alpha >= 0.0 {
            Ok(PvScaling { alpha })
        } else {
            Err(ProfileError::InvalidScaling(alpha))
        }
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }
}

/// Multiplies every PV output (active and reactive) by `s.alpha`; loads untouched.
pub fn scale_pv(profiles: &ProfileSet, s: PvScaling) -> ProfileSet {
    ProfileSet { pv_scale: profiles.pv_scale * s.alpha, ..profiles.clone() }
}

/// Daily shape of one season for the synthetic generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SeasonShape {
    pub season: String,
    /// Per-household evening peak demand (kW).
    pub peak_load_kw: f64,
    /// Per-household overnight base demand (kW).
    pub base_load_kw: f64,
    /// Hour of the evening demand peak.
    pub peak_hour: usize,
    /// PV output at solar noon as a fraction of the rating.
    pub pv_peak_fraction: f64,
    /// First and last hour of the daylight window; PV is zero outside it
    /// and peaks midway.
    pub daylight_start: usize,
    pub daylight_end: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    /// Rating of each PV system (kW).
    pub pv_rating_kw: f64,
    /// Lagging load power factor.
    pub load_power_factor: f64,
    /// Relative spread of household size and hourly demand, in [0, 1).
    pub noise: f64,
    pub seasons: Vec<SeasonShape>,
}

impl SynthParams {
    fn validate(&self, hours: usize) -> Result<(), ProfileError> {
        let bad = |m: &str| Err(ProfileError::InvalidParams(m.into()));
        if !(self.pv_rating_kw.is_finite() && self.pv_rating_kw >= 0.0) {
            return bad("pv_rating_kw must be non-negative");
        }
        if !(self.load_power_factor > 0.0 && self.load_power_factor <= 1.0) {
            return bad("load_power_factor must lie in (0, 1]");
        }
        if !(self.noise >= 0.0 && self.noise < 1.0) {
            return bad("noise must lie in [0, 1)");
        }
        for s in &self.seasons {
            if !(s.base_load_kw >= 0.0 && s.peak_load_kw >= s.base_load_kw && s.peak_load_kw.is_finite()) {
                return bad("season loads must satisfy 0 <= base <= peak");
            }
            if s.peak_hour >= hours {
                return bad("peak_hour outside the day");
            }
            if !(0.0..=1.0).contains(&s.pv_peak_fraction) {
                return bad("pv_peak_fraction must lie in [0, 1]");
            }
            if !(s.daylight_start < s.daylight_end && s.daylight_end < hours) {
                return bad("daylight window must satisfy start < end < hours_per_day");
            }
        }
        Ok(())
    }
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn bump(hour: usize, centre: usize, hours: usize, width: f64) -> f64 {
    let d = hour.abs_diff(centre);
    let d = d.min(hours - d) as f64;
    math::exp(-0.5 * (d / width) * (d / width))
}

/// Daylight PV shape: half-sine over `[start, end]`, exactly 1 at the midpoint.
pub fn pv_shape(hour: usize, start: usize, end: usize) -> f64 {
    if hour < start || hour > end {
        return 0.0;
    }
    let x = (hour - start) as f64 / (end - start) as f64;
    math::sin(core::f64::consts::PI * x).max(0.0)
}

/// Seeded synthetic household load and rooftop PV.
///
/// Every grid day picks the [`SeasonShape`] whose `season` matches the
/// day's season label. Each loaded (bus, phase) gets a household size
/// factor; demand follows a morning and an evening bump over the base
/// load with multiplicative hourly noise. PV is clear-sky and identical
/// for all systems.
pub fn synth_profiles(
    seed: u64,
    net: &Network,
    grid: &TimeGrid,
    params: &SynthParams,
) -> Result<ProfileSet, ProfileError> {
    let hours = grid.hours_per_day();
    params.validate(hours)?;
    let shapes: Vec<&SeasonShape> = grid
        .days()
        .iter()
        .map(|d| {
            params
                .seasons
                .iter()
                .find(|s| s.season == d.season)
                .ok_or_else(|| ProfileError::InvalidParams(alloc::format!("no shape for season {}", d.season)))
        })
        .collect::<Result<_, _>>()?;

    let tan_phi = math::sqrt(1.0 - params.load_power_factor * params.load_power_factor) / params.load_power_factor;
    let len = grid.steps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = BTreeMap::new();
    for bus in net.buses() {
        for phase in bus.phases.iter() {
            let has_load = bus.load.contains(phase);
            let has_pv = bus.pv.contains(phase);
            if !has_load && !has_pv {
                continue;
            }
            let mut prof = PhaseProfile::zeros(len);
            // Always draw, so flags on one connection do not shift the
            // stream seen by the others.
            let size = 1.0 + params.noise * (2.0 * unit(&mut rng) - 1.0);
            for (d, shape) in shapes.iter().enumerate() {
                let morning = (shape.peak_hour + hours - 12 % hours) % hours;
                for h in 0..hours {
                    let k = d * hours + h;
                    let jitter = 1.0 + params.noise * (2.0 * unit(&mut rng) - 1.0);
                    if has_load {
                        let s = bump(h, shape.peak_hour, hours, 1.5).max(0.5 * bump(h, morning, hours, 1.5));
                        let p = (shape.base_load_kw + (shape.peak_load_kw - shape.base_load_kw) * s) * size * jitter;
                        prof.p_load[k] = p;
                        prof.q_load[k] = p * tan_phi;
                    }
                    if has_pv {
                        prof.p_pv[k] = params.pv_rating_kw
                            * shape.pv_peak_fraction
                            * pv_shape(h, shape.daylight_start, shape.daylight_end);
                    }
                }
            }
            series.insert((bus.id, phase), prof);
        }
    }
    Ok(ProfileSet { hours_per_day: hours, days: grid.day_count(), series, pv_scale: 1.0 })
}
