//! Scenario configuration (TOML).
//!
//! Every value that changes results is spelled out in the file. The only
//! optional keys are solver internals that affect speed, not answers
//! beyond the stated tolerances, plus choices whose absence has an obvious
//! meaning (no explicit candidate list means the feeder's flags).

use std::path::{Path, PathBuf};

use gridstor_core::{
    BusId, DaySpec, EssCount, EssTemplate, QpSettings, RateLimit, SeasonShape, SweepOptions, SynthParams, TimeGrid,
};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub feeder: PathBuf,
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub profiles: ProfilesConfig,
    pub study: StudyConfig,
    pub ess: EssConfig,
    pub solver: SolverConfig,
    pub report: ReportConfig,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub hours_per_day: usize,
    pub delta_t_h: f64,
    pub days: Vec<DayConfig>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DayConfig {
    pub id: String,
    pub season: String,
    pub weight_days: f64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProfilesConfig {
    /// Profile CSV; exclusive with `synth`.
    pub file: Option<PathBuf>,
    /// Generator seed, overridable from the command line.
    pub seed: Option<u64>,
    pub synth: Option<SynthConfig>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub pv_rating_kw: f64,
    pub load_power_factor: f64,
    pub noise: f64,
    pub seasons: Vec<SeasonConfig>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SeasonConfig {
    pub season: String,
    pub peak_load_kw: f64,
    pub base_load_kw: f64,
    pub peak_hour: usize,
    pub pv_peak_fraction: f64,
    pub daylight_start: usize,
    pub daylight_end: usize,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum UnitCount {
    Fixed(usize),
    Word(String),
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum AggregateCap {
    Kwh(f64),
    Mode(String),
}

/// How the DESS rows share capacity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CapMode {
    /// Each row sizes freely.
    Free,
    /// The single-unit optimum's capacity, split across units.
    FromCess,
    Fixed(f64),
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Candidate buses; the feeder's `ess_candidate` flags when absent.
    pub candidates: Option<Vec<BusId>>,
    /// Unit count for `size`: an integer or `"free"`.
    pub n_ess: UnitCount,
    /// Unit counts for `sweep`.
    pub n_sweep: Vec<usize>,
    /// `"free"`, `"from-cess"` or a capacity in kWh.
    pub aggregate_cap: AggregateCap,
    /// Day id used for the hosting-capacity search.
    pub hosting_day: String,
    /// Per-unit capacity bound; derived from the single-unit optimum when absent.
    pub capacity_bound_kwh: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EssConfig {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub min_soc_fraction: f64,
    /// Ratings as capacity / hours; exclusive with the fixed ratings.
    pub c_rate_hours: Option<f64>,
    pub charge_kw: Option<f64>,
    pub discharge_kw: Option<f64>,
    /// Objective weight on installed capacity (kWh of loss per kWh).
    pub capacity_penalty: f64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub node_limit: usize,
    pub powerflow_tol: f64,
    pub powerflow_max_iter: usize,
    pub hosting_tol_kw: f64,
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    pub polish: Option<bool>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub vuf_reference_percent: f64,
    /// Wall-clock times make outputs differ between runs, so they are off
    /// unless asked for.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads `path`; relative paths inside are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = Self::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut cfg.feeder);
        fix(&mut cfg.output_dir);
        if let Some(f) = cfg.profiles.file.as_mut() {
            fix(f);
        }
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        for d in &self.grid.days {
            if d.id.is_empty() || d.id.contains(|c: char| c.is_whitespace() || c == ',' || c == '/') {
                return invalid(format!("day id {:?} must be non-empty without spaces, commas or slashes", d.id));
            }
        }
        match (&self.profiles.file, &self.profiles.synth) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return invalid("profiles need exactly one of `file` and `synth`"),
        }
        if self.profiles.synth.is_some() && self.profiles.seed.is_none() {
            return invalid("synthetic profiles need a `seed`");
        }
        if self.study.n_sweep.contains(&0) {
            return invalid("n_sweep entries must be at least 1");
        }
        self.unit_count()?;
        self.cap_mode()?;
        self.template()?;
        if !(self.report.vuf_reference_percent.is_finite() && self.report.vuf_reference_percent >= 0.0) {
            return invalid("vuf_reference_percent must be non-negative");
        }
        let s = &self.solver;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(s.powerflow_tol) && pos(s.hosting_tol_kw) && s.eps_abs >= 0.0 && s.eps_rel >= 0.0) {
            return invalid("solver tolerances must be positive");
        }
        if s.max_iter == 0 || s.powerflow_max_iter == 0 || s.node_limit == 0 {
            return invalid("iteration and node limits must be positive");
        }
        if !(self.ess.capacity_penalty.is_finite() && self.ess.capacity_penalty >= 0.0) {
            return invalid("capacity_penalty must be non-negative");
        }
        if let Some(b) = self.study.capacity_bound_kwh {
            if !pos(b) {
                return invalid("capacity_bound_kwh must be positive");
            }
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid, ConfigError> {
        let days = self.grid.days.iter().map(|d| DaySpec::new(&d.id, &d.season, d.weight_days)).collect();
        TimeGrid::new(self.grid.hours_per_day, self.grid.delta_t_h, days)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn synth_params(&self) -> Option<SynthParams> {
        self.profiles.synth.as_ref().map(|s| SynthParams {
            pv_rating_kw: s.pv_rating_kw,
            load_power_factor: s.load_power_factor,
            noise: s.noise,
            seasons: s
                .seasons
                .iter()
                .map(|x| SeasonShape {
                    season: x.season.clone(),
                    peak_load_kw: x.peak_load_kw,
                    base_load_kw: x.base_load_kw,
                    peak_hour: x.peak_hour,
                    pv_peak_fraction: x.pv_peak_fraction,
                    daylight_start: x.daylight_start,
                    daylight_end: x.daylight_end,
                })
                .collect(),
        })
    }

    pub fn unit_count(&self) -> Result<EssCount, ConfigError> {
        match &self.study.n_ess {
            UnitCount::Fixed(n) => Ok(EssCount::Fixed(*n)),
            UnitCount::Word(w) if w == "free" => Ok(EssCount::Free),
            UnitCount::Word(w) => invalid(format!("n_ess must be an integer or \"free\", got {w:?}")),
        }
    }

    pub fn cap_mode(&self) -> Result<CapMode, ConfigError> {
        match &self.study.aggregate_cap {
            AggregateCap::Kwh(v) if v.is_finite() && *v >= 0.0 => Ok(CapMode::Fixed(*v)),
            AggregateCap::Kwh(v) => invalid(format!("aggregate_cap must be non-negative, got {v}")),
            AggregateCap::Mode(m) if m == "free" => Ok(CapMode::Free),
            AggregateCap::Mode(m) if m == "from-cess" => Ok(CapMode::FromCess),
            AggregateCap::Mode(m) => {
                invalid(format!("aggregate_cap must be \"free\", \"from-cess\" or a number, got {m:?}"))
            }
        }
    }

    pub fn template(&self) -> Result<EssTemplate, ConfigError> {
        let e = &self.ess;
        let rate = match (e.c_rate_hours, e.charge_kw, e.discharge_kw) {
            (Some(hours), None, None) => RateLimit::CRate { hours },
            (None, Some(charge_kw), Some(discharge_kw)) => RateLimit::Fixed { charge_kw, discharge_kw },
            _ => return invalid("give either c_rate_hours or both charge_kw and discharge_kw"),
        };
        Ok(EssTemplate { eta_plus: e.eta_plus, eta_minus: e.eta_minus, rate, min_soc_fraction: e.min_soc_fraction })
    }

    pub fn qp_settings(&self) -> QpSettings {
        let s = &self.solver;
        let d = QpSettings::default();
        QpSettings {
            eps_abs: s.eps_abs,
            eps_rel: s.eps_rel,
            max_iter: s.max_iter,
            rho: s.rho.unwrap_or(d.rho),
            sigma: s.sigma.unwrap_or(d.sigma),
            alpha: s.alpha.unwrap_or(d.alpha),
            polish: s.polish.unwrap_or(d.polish),
            ..d
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions { tol: self.solver.powerflow_tol, max_iter: self.solver.powerflow_max_iter }
    }
}
