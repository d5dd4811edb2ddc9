//! Command orchestration: load a scenario, run a study, write artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gridstor_core::{
    capacity_bound, dess_row, index_report, solve_miqp, synth_profiles, AnalysisError, DessBaseline, DessOptions,
    DessRow, EssCount, IndexReport, Network, ProfileError, ProfileSet, RadialViolation, SizingError, SizingProblem,
    SizingSolution, TimeGrid,
};
use thiserror::Error;

use crate::config::{CapMode, ConfigError, ScenarioConfig};
use crate::feeder::{parse_feeder, FeederError};
use crate::output::{self, Csv, REPORT_HEADER};
use crate::solution::SolutionFile;
use crate::tables::{read_profiles, write_schedule, TableError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("feeder {path}: {source}")]
    Feeder { path: PathBuf, source: Box<FeederError> },
    #[error("feeder {path} is not radial: {violation}")]
    NotRadial { path: PathBuf, violation: Box<RadialViolation> },
    #[error("profiles {path}: {source}")]
    Table { path: PathBuf, source: TableError },
    #[error("profiles: {0}")]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Sizing(#[from] SizingError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

/// Exit status classes of the command-line driver.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

fn analysis_code(e: &AnalysisError) -> i32 {
    match e {
        AnalysisError::BaseCaseViolation { .. } => EXIT_INFEASIBLE,
        AnalysisError::UnknownBus(_)
        | AnalysisError::ScheduleShape { .. }
        | AnalysisError::GridMismatch
        | AnalysisError::UnknownDay(_)
        | AnalysisError::InvalidTolerance => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Sizing(e) => match e {
                SizingError::Infeasible | SizingError::VoltageInfeasible { .. } => EXIT_INFEASIBLE,
                SizingError::Qp(_)
                | SizingError::MaxIter
                | SizingError::BudgetExceeded { .. }
                | SizingError::Verification { .. } => EXIT_SOLVER,
                SizingError::Analysis(a) => analysis_code(a),
                _ => EXIT_CONFIG,
            },
            RunError::Analysis(a) => analysis_code(a),
            _ => EXIT_CONFIG,
        }
    }

    /// Short machine-readable class name.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_INFEASIBLE => "infeasible",
            EXIT_SOLVER => "solver",
            _ => "config",
        }
    }

    /// One-line JSON record for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() })
            .to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Validate,
    Baseline,
    Size,
    Sweep,
    Report,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

/// A loaded feeder with its profiles and study settings.
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub net: Network,
    pub grid: TimeGrid,
    pub profiles: ProfileSet,
    pub hosting_day: usize,
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|source| RunError::Read { path: path.into(), source })
}

impl Scenario {
    pub fn load(cfg: ScenarioConfig, seed: Option<u64>) -> Result<Self, RunError> {
        let path = cfg.feeder.clone();
        let feeder = parse_feeder(&read(&path)?)
            .map_err(|source| RunError::Feeder { path: path.clone(), source: Box::new(source) })?;
        if let Err(violation) = feeder.radial_check() {
            return Err(RunError::NotRadial { path, violation: Box::new(violation) });
        }
        let net = feeder.into_network().map_err(|source| RunError::Feeder { path, source: Box::new(source) })?;
        let grid = cfg.time_grid()?;
        let profiles = match (&cfg.profiles.file, cfg.synth_params()) {
            (Some(file), _) => read_profiles(&read(file)?, &net, &grid)
                .map_err(|source| RunError::Table { path: file.clone(), source })?,
            (None, Some(params)) => {
                let seed = seed.or(cfg.profiles.seed).expect("checked at parse time");
                synth_profiles(seed, &net, &grid, &params)?
            }
            (None, None) => unreachable!("checked at parse time"),
        };
        let hosting_day = grid.day_index(&cfg.study.hosting_day).ok_or_else(|| {
            ConfigError::Invalid(format!("hosting_day {:?} is not a grid day", cfg.study.hosting_day))
        })?;
        Ok(Scenario { cfg, net, grid, profiles, hosting_day })
    }

    pub fn candidates(&self) -> Vec<i64> {
        match &self.cfg.study.candidates {
            Some(c) => c.clone(),
            None => self.net.buses().iter().filter(|b| b.ess_candidate).map(|b| b.id).collect(),
        }
    }

    pub fn problem(&self, n: EssCount, aggregate_cap: Option<f64>) -> Result<SizingProblem, RunError> {
        let mut p =
            SizingProblem::new(self.net.clone(), self.profiles.clone(), self.grid.clone(), self.candidates(), n);
        p.aggregate_cap = aggregate_cap;
        p.capacity_bound = self.cfg.study.capacity_bound_kwh;
        p.template = self.cfg.template()?;
        p.capacity_penalty = self.cfg.ess.capacity_penalty;
        p.qp = self.cfg.qp_settings();
        p.node_limit = self.cfg.solver.node_limit;
        Ok(p)
    }

    pub fn dess_options(&self) -> DessOptions {
        DessOptions {
            hosting_day: self.hosting_day,
            hosting_tol_kw: self.cfg.solver.hosting_tol_kw,
            sweep: self.cfg.sweep_options(),
        }
    }

    pub fn indices(&self, placements: &[gridstor_core::Placement]) -> Result<IndexReport, RunError> {
        let o = self.dess_options();
        Ok(index_report(&self.net, &self.profiles, &self.grid, placements, o.hosting_day, o.hosting_tol_kw, &o.sweep)?)
    }

    fn timed(&self, f: impl FnOnce() -> Result<SizingSolution, SizingError>) -> Result<SizingSolution, RunError> {
        let start = Instant::now();
        let mut sol = f()?;
        if self.cfg.report.record_wall_time {
            sol.stats.wall_time_s = Some(start.elapsed().as_secs_f64());
        }
        Ok(sol)
    }

    /// Optimum for the configured unit count.
    pub fn size(&self) -> Result<SizingSolution, RunError> {
        let cap = match self.cfg.cap_mode()? {
            CapMode::Fixed(v) => Some(v),
            CapMode::Free | CapMode::FromCess => None,
        };
        let p = self.problem(self.cfg.unit_count()?, cap)?;
        self.timed(|| solve_miqp(&p))
    }

    /// DESS rows over the configured unit counts; rows run on up to `jobs`
    /// threads and come back in input order.
    pub fn sweep(&self, jobs: usize) -> Result<(DessBaseline, Vec<DessRow>), RunError> {
        let aggregate = match self.cfg.cap_mode()? {
            CapMode::Free => None,
            CapMode::Fixed(v) => Some(v),
            CapMode::FromCess => {
                let single = self.problem(EssCount::Fixed(1), None)?;
                Some(solve_miqp(&single)?.total_capacity())
            }
        };
        let mut p = self.problem(EssCount::Fixed(1), aggregate)?;
        p.capacity_bound = Some(capacity_bound(&p)?);
        let opts = self.dess_options();
        let base = DessBaseline::compute(&p, &opts)?;
        let ns = &self.cfg.study.n_sweep;
        let mut rows: Vec<Option<Result<DessRow, SizingError>>> = (0..ns.len()).map(|_| None).collect();
        let jobs = jobs.max(1);
        for chunk in (0..ns.len()).collect::<Vec<_>>().chunks(jobs) {
            let (p, base, opts) = (&p, &base, &opts);
            std::thread::scope(|s| {
                let handles: Vec<_> =
                    chunk.iter().map(|&i| (i, s.spawn(move || dess_row(p, ns[i], base, opts)))).collect();
                for (i, h) in handles {
                    rows[i] = Some(h.join().expect("sweep worker panicked"));
                }
            });
        }
        let rows = rows.into_iter().map(|r| r.expect("every row ran")).collect::<Result<Vec<_>, _>>()?;
        Ok((base, rows))
    }
}

struct Writer {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, rel: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(rel);
        output::write_atomic(&path, contents).map_err(|source| RunError::Write { path: path.clone(), source })?;
        self.written.push(path);
        Ok(())
    }
}

fn baseline_rows(csv: &mut Csv, sc: &Scenario, r: &IndexReport) {
    output::report_rows(csv, "baseline", r, &sc.grid, sc.cfg.report.vuf_reference_percent);
}

fn size_rows(csv: &mut Csv, sc: &Scenario, sol: &SizingSolution, base: &IndexReport, with: &IndexReport) {
    output::placement_rows(csv, "size", &sol.placements);
    output::value_row(csv, "size", "objective_loss", sol.objective_kwh, "kWh", None);
    output::report_rows(csv, "size", with, &sc.grid, sc.cfg.report.vuf_reference_percent);
    let pct = |b: f64, n: f64| {
        if b.abs() > 0.0 {
            100.0 * (n - b) / b
        } else {
            0.0
        }
    };
    let red = -pct(base.losses.annual_kwh, with.losses.annual_kwh);
    output::value_row(csv, "size", "loss_reduction", red, "percent", None);
    let inc = pct(base.hosting.hosting_kw, with.hosting.hosting_kw);
    output::value_row(csv, "size", "hosting_increase", inc, "percent", None);
}

fn sweep_rows(csv: &mut Csv, rows: &[DessRow]) {
    for r in rows {
        let sc = format!("sweep_n{}", r.n);
        output::placement_rows(csv, &sc, &r.solution.placements);
        output::value_row(csv, &sc, "objective_loss", r.objective_kwh, "kWh", None);
        output::value_row(csv, &sc, "annual_loss", r.annual_loss_kwh, "kWh", None);
        output::value_row(csv, &sc, "loss_reduction", r.loss_reduction_percent, "percent", None);
        output::value_row(csv, &sc, "hosting_total", r.hosting_kw, "kW", None);
        output::value_row(csv, &sc, "hosting_increase", r.hosting_increase_percent, "percent", None);
        output::value_row(csv, &sc, "vuf_max", r.vuf_max_percent, "percent", None);
        output::value_row(csv, &sc, "vuf_avg", r.vuf_avg_percent, output::VUF_AVG_NOTE, None);
    }
}

fn write_size(w: &mut Writer, sc: &Scenario, sol: &SizingSolution, with: &IndexReport) -> Result<(), RunError> {
    let file = SolutionFile::from_solution(sol, &sc.grid);
    w.put("solution.txt", &file.to_text())?;
    for p in &sol.placements {
        for (d, s) in sc.grid.days().iter().zip(&p.schedules) {
            w.put(&crate::solution::schedule_path(p.bus, &d.id), &write_schedule(s))?;
        }
    }
    w.put("size_vuf.csv", &output::vuf_series(&with.vuf, &sc.grid))?;
    w.put("plot_schedule.csv", &output::schedule_plot(&sol.placements, &sc.cfg.template()?, &sc.grid))
}

fn write_sweep(w: &mut Writer, base: &DessBaseline, rows: &[DessRow]) -> Result<(), RunError> {
    w.put("sweep.csv", &output::sweep_table(base, rows))?;
    w.put("plot_loss_vs_n.csv", &output::loss_vs_n(rows))?;
    w.put("plot_hosting_vs_n.csv", &output::hosting_vs_n(rows))
}

/// Runs `cmd` for the configuration at `config_path`; returns the files
/// written, in order.
pub fn run(cmd: Command, config_path: &Path, opts: &RunOptions) -> Result<Vec<PathBuf>, RunError> {
    let cfg = ScenarioConfig::load(config_path)?;
    let dir = opts.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let sc = Scenario::load(cfg, opts.seed)?;
    let mut w = Writer { dir, written: Vec::new() };
    let jobs = opts.jobs.unwrap_or(1);
    match cmd {
        Command::Validate => {
            // candidate and template checks, without solving anything
            sc.problem(sc.cfg.unit_count()?, None)?.validate()?;
        }
        Command::Baseline => {
            let base = sc.indices(&[])?;
            let mut csv = Csv::new(&REPORT_HEADER);
            baseline_rows(&mut csv, &sc, &base);
            w.put("baseline_report.csv", &csv.finish())?;
            w.put("baseline_vuf.csv", &output::vuf_series(&base.vuf, &sc.grid))?;
        }
        Command::Size => {
            let base = sc.indices(&[])?;
            let sol = sc.size()?;
            let with = sc.indices(&sol.placements)?;
            let mut csv = Csv::new(&REPORT_HEADER);
            baseline_rows(&mut csv, &sc, &base);
            size_rows(&mut csv, &sc, &sol, &base, &with);
            w.put("size_report.csv", &csv.finish())?;
            write_size(&mut w, &sc, &sol, &with)?;
        }
        Command::Sweep => {
            let (base, rows) = sc.sweep(jobs)?;
            write_sweep(&mut w, &base, &rows)?;
        }
        Command::Report => {
            let base = sc.indices(&[])?;
            let sol = sc.size()?;
            let with = sc.indices(&sol.placements)?;
            let mut csv = Csv::new(&REPORT_HEADER);
            baseline_rows(&mut csv, &sc, &base);
            size_rows(&mut csv, &sc, &sol, &base, &with);
            w.put("baseline_vuf.csv", &output::vuf_series(&base.vuf, &sc.grid))?;
            write_size(&mut w, &sc, &sol, &with)?;
            if !sc.cfg.study.n_sweep.is_empty() {
                let (sbase, rows) = sc.sweep(jobs)?;
                sweep_rows(&mut csv, &rows);
                write_sweep(&mut w, &sbase, &rows)?;
            }
            w.put("report.csv", &csv.finish())?;
        }
    }
    Ok(w.written)
}
