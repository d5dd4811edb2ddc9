//! Solution files: placements, references to per-day schedule CSVs and a
//! block of solver statistics.
//!
//! ```text
//! [PLACEMENT]
//! # bus capacity_kwh e0_kwh
//! 7 41.5 12.25
//! [SCHEDULE]
//! # bus day file
//! 7 summer schedules/ess_7_summer.csv
//! [STATS]
//! objective_kwh 812.5
//! nodes 3
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use gridstor_core::{BusId, Placement, SizingSolution, TimeGrid};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolutionError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("placement at bus {bus}: no schedule for day {day}")]
    MissingSchedule { bus: BusId, day: String },
    #[error("schedule reference for bus {bus}, which has no placement")]
    OrphanSchedule { bus: BusId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleRef {
    pub bus: BusId,
    pub day: String,
    pub file: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolutionStats {
    pub objective_kwh: f64,
    pub qp_objective: f64,
    pub capacity_bound_kwh: f64,
    pub gap: f64,
    pub best_bound: f64,
    pub nodes: usize,
    pub qp_solves: usize,
    pub qp_iterations: usize,
    pub wall_time_s: Option<f64>,
    pub notes: Vec<String>,
}

/// Contents of a solution file; schedules are referenced, not inlined.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolutionFile {
    /// (bus, capacity kWh, initial energy kWh)
    pub placements: Vec<(BusId, f64, f64)>,
    pub schedules: Vec<ScheduleRef>,
    pub stats: SolutionStats,
}

/// Relative path of the schedule CSV for one unit and day.
pub fn schedule_path(bus: BusId, day: &str) -> String {
    format!("schedules/ess_{bus}_{day}.csv")
}

impl SolutionFile {
    pub fn from_solution(sol: &SizingSolution, grid: &TimeGrid) -> Self {
        let placements = sol.placements.iter().map(|p| (p.bus, p.capacity_kwh, p.e0_kwh)).collect();
        let schedules = sol
            .placements
            .iter()
            .flat_map(|p| {
                grid.days().iter().map(move |d| ScheduleRef {
                    bus: p.bus,
                    day: d.id.clone(),
                    file: schedule_path(p.bus, &d.id),
                })
            })
            .collect();
        let st = &sol.stats;
        SolutionFile {
            placements,
            schedules,
            stats: SolutionStats {
                objective_kwh: sol.objective_kwh,
                qp_objective: sol.qp_objective,
                capacity_bound_kwh: sol.capacity_bound_kwh,
                gap: sol.optimality_gap,
                best_bound: st.best_bound,
                nodes: st.nodes,
                qp_solves: st.qp_solves,
                qp_iterations: st.qp_iterations,
                wall_time_s: st.wall_time_s,
                notes: st.notes.clone(),
            },
        }
    }

    /// Rebuilds placements, fetching each referenced schedule through `load`
    /// (called with the file path), in grid day order.
    pub fn placements<E>(
        &self,
        grid: &TimeGrid,
        mut load: impl FnMut(&str) -> Result<gridstor_core::EssSchedule, E>,
    ) -> Result<Vec<Placement>, E>
    where
        E: From<SolutionError>,
    {
        for r in &self.schedules {
            if !self.placements.iter().any(|p| p.0 == r.bus) {
                return Err(SolutionError::OrphanSchedule { bus: r.bus }.into());
            }
        }
        let mut out = Vec::new();
        for &(bus, capacity_kwh, e0_kwh) in &self.placements {
            let mut schedules = Vec::new();
            for d in grid.days() {
                let r = self
                    .schedules
                    .iter()
                    .find(|r| r.bus == bus && r.day == d.id)
                    .ok_or_else(|| SolutionError::MissingSchedule { bus, day: d.id.clone() })?;
                schedules.push(load(&r.file)?);
            }
            out.push(Placement { bus, capacity_kwh, e0_kwh, schedules });
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("[PLACEMENT]\n# bus capacity_kwh e0_kwh\n");
        for (b, c, e) in &self.placements {
            let _ = writeln!(s, "{b} {c} {e}");
        }
        s.push_str("\n[SCHEDULE]\n# bus day file\n");
        for r in &self.schedules {
            let _ = writeln!(s, "{} {} {}", r.bus, r.day, r.file);
        }
        let st = &self.stats;
        s.push_str("\n[STATS]\n");
        let _ = writeln!(s, "objective_kwh {}", st.objective_kwh);
        let _ = writeln!(s, "qp_objective {}", st.qp_objective);
        let _ = writeln!(s, "capacity_bound_kwh {}", st.capacity_bound_kwh);
        let _ = writeln!(s, "gap {}", st.gap);
        let _ = writeln!(s, "best_bound {}", st.best_bound);
        let _ = writeln!(s, "nodes {}", st.nodes);
        let _ = writeln!(s, "qp_solves {}", st.qp_solves);
        let _ = writeln!(s, "qp_iterations {}", st.qp_iterations);
        if let Some(t) = st.wall_time_s {
            let _ = writeln!(s, "time_s {t}");
        }
        for n in &st.notes {
            let _ = writeln!(s, "note {n}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, SolutionError> {
        let mut out = SolutionFile::default();
        let mut section = "";
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let err = |msg: String| SolutionError::Syntax { line: ln, msg };
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            if body.starts_with('[') {
                section = match body {
                    "[PLACEMENT]" => "placement",
                    "[SCHEDULE]" => "schedule",
                    "[STATS]" => "stats",
                    _ => return Err(err(format!("unknown section {body}"))),
                };
                continue;
            }
            let f: Vec<&str> = body.split_whitespace().collect();
            let num = |t: &str| t.parse::<f64>().map_err(|_| err(format!("not a number: {t:?}")));
            let int = |t: &str| t.parse::<usize>().map_err(|_| err(format!("not an integer: {t:?}")));
            let bus = |t: &str| t.parse::<BusId>().map_err(|_| err(format!("bad bus id {t:?}")));
            match section {
                "placement" => {
                    if f.len() != 3 {
                        return Err(err("placement needs bus capacity_kwh e0_kwh".into()));
                    }
                    out.placements.push((bus(f[0])?, num(f[1])?, num(f[2])?));
                }
                "schedule" => {
                    if f.len() != 3 {
                        return Err(err("schedule reference needs bus day file".into()));
                    }
                    out.schedules.push(ScheduleRef { bus: bus(f[0])?, day: f[1].into(), file: f[2].into() });
                }
                "stats" => {
                    let key = f[0];
                    let rest = body[key.len()..].trim();
                    if key != "note" && seen.insert(key.into(), ln).is_some() {
                        return Err(err(format!("repeated statistic {key}")));
                    }
                    let st = &mut out.stats;
                    match key {
                        "objective_kwh" => st.objective_kwh = num(rest)?,
                        "qp_objective" => st.qp_objective = num(rest)?,
                        "capacity_bound_kwh" => st.capacity_bound_kwh = num(rest)?,
                        "gap" => st.gap = num(rest)?,
                        "best_bound" => st.best_bound = num(rest)?,
                        "nodes" => st.nodes = int(rest)?,
                        "qp_solves" => st.qp_solves = int(rest)?,
                        "qp_iterations" => st.qp_iterations = int(rest)?,
                        "time_s" => st.wall_time_s = Some(num(rest)?),
                        "note" => st.notes.push(rest.into()),
                        _ => return Err(err(format!("unknown statistic {key}"))),
                    }
                }
                _ => return Err(err("record outside any section".into())),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridstor_core::{DaySpec, EssSchedule, SolverStats};

    fn grid() -> TimeGrid {
        TimeGrid::new(2, 1.0, vec![DaySpec::new("a", "summer", 200.0), DaySpec::new("b", "winter", 165.0)]).unwrap()
    }

    fn solution() -> SizingSolution {
        let sched = |x: f64| EssSchedule::new(vec![x, 0.0], vec![0.0, x]);
        SizingSolution {
            placements: vec![
                Placement { bus: 4, capacity_kwh: 12.5, e0_kwh: 0.1, schedules: vec![sched(1.0), sched(2.0)] },
                Placement { bus: 9, capacity_kwh: 1.0 / 3.0, e0_kwh: 0.0, schedules: vec![sched(0.5), sched(0.0)] },
            ],
            objective_kwh: 100.25,
            qp_objective: 100.5,
            capacity_bound_kwh: 50.0,
            stats: SolverStats {
                nodes: 3,
                qp_solves: 5,
                qp_iterations: 999,
                best_bound: 100.0,
                wall_time_s: None,
                notes: vec!["capacity bound 50 kWh derived".into()],
            },
            optimality_gap: 0.0,
        }
    }

    #[test]
    fn round_trip_with_schedules() {
        let sol = solution();
        let g = grid();
        let file = SolutionFile::from_solution(&sol, &g);
        let back = SolutionFile::parse(&file.to_text()).unwrap();
        assert_eq!(back, file);
        let files: BTreeMap<String, EssSchedule> = sol
            .placements
            .iter()
            .flat_map(|p| g.days().iter().zip(&p.schedules).map(|(d, s)| (schedule_path(p.bus, &d.id), s.clone())))
            .collect();
        let placements = back.placements::<SolutionError>(&g, |f| Ok(files[f].clone())).unwrap();
        assert_eq!(placements, sol.placements);
    }

    #[test]
    fn wall_time_only_when_recorded() {
        let mut sol = solution();
        assert!(!SolutionFile::from_solution(&sol, &grid()).to_text().contains("time_s"));
        sol.stats.wall_time_s = Some(1.5);
        let text = SolutionFile::from_solution(&sol, &grid()).to_text();
        assert_eq!(SolutionFile::parse(&text).unwrap().stats.wall_time_s, Some(1.5));
    }

    #[test]
    fn missing_schedule_is_reported() {
        let mut file = SolutionFile::from_solution(&solution(), &grid());
        file.schedules.pop();
        let err = file.placements::<SolutionError>(&grid(), |_| Ok(EssSchedule::zeros(2))).unwrap_err();
        assert!(matches!(err, SolutionError::MissingSchedule { bus: 9, .. }));
    }

    #[test]
    fn bad_records_name_their_line() {
        assert!(matches!(SolutionFile::parse("[PLACEMENT]\n4 x 0\n"), Err(SolutionError::Syntax { line: 2, .. })));
        assert!(matches!(SolutionFile::parse("[STATS]\nfoo 1\n"), Err(SolutionError::Syntax { line: 2, .. })));
        assert!(matches!(SolutionFile::parse("4 1 0\n"), Err(SolutionError::Syntax { line: 1, .. })));
    }
}
