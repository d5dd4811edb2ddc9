//! Profile and schedule CSV files.

use std::fmt::Write as _;

use gridstor_core::{EssSchedule, Network, Phase, ProfileError, ProfileRecord, ProfileSet, TimeGrid};
use thiserror::Error;

pub const PROFILE_HEADER: [&str; 8] =
    ["bus", "phase", "day", "hour", "p_load_kw", "q_load_kvar", "p_pv_kw", "q_pv_kvar"];
pub const SCHEDULE_HEADER: [&str; 3] = ["hour", "p_plus_kw_per_phase", "p_minus_kw_per_phase"];

#[derive(Debug, Error)]
pub enum TableError {
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<(), TableError> {
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if found != expected {
        return Err(TableError::Header { expected: expected.join(","), found: found.join(",") });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T, TableError> {
    let row = rec.position().map_or(0, |p| p.line() as usize);
    let s = rec.get(i).ok_or_else(|| TableError::Row { row, msg: format!("missing {what}") })?;
    s.parse().map_err(|_| TableError::Row { row, msg: format!("bad {what} {s:?}") })
}

/// Reads a profile CSV. `day` holds the day id of `grid`.
pub fn read_profiles(text: &str, net: &Network, grid: &TimeGrid) -> Result<ProfileSet, TableError> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &PROFILE_HEADER)?;
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| TableError::Row { row, msg };
        if rec.len() != PROFILE_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", PROFILE_HEADER.len(), rec.len())));
        }
        let phase_txt = &rec[1];
        let mut chars = phase_txt.chars();
        let phase = match (chars.next().and_then(Phase::from_letter), chars.next()) {
            (Some(p), None) => p,
            _ => return Err(bad(format!("bad phase {phase_txt:?}"))),
        };
        let day_id = &rec[2];
        let day = grid.day_index(day_id).ok_or_else(|| bad(format!("unknown day {day_id:?}")))?;
        records.push(ProfileRecord {
            bus: field(&rec, 0, "bus")?,
            phase,
            day,
            hour: field(&rec, 3, "hour")?,
            p_load: field(&rec, 4, "p_load_kw")?,
            q_load: field(&rec, 5, "q_load_kvar")?,
            p_pv: field(&rec, 6, "p_pv_kw")?,
            q_pv: field(&rec, 7, "q_pv_kvar")?,
        });
    }
    Ok(ProfileSet::from_records(net, grid, records)?)
}

/// Writes every series; values print in shortest round-trip decimal form, so
/// reading the file back reproduces the set bit for bit.
pub fn write_profiles(profiles: &ProfileSet, grid: &TimeGrid) -> String {
    let mut s = PROFILE_HEADER.join(",");
    s.push('\n');
    for r in profiles.records() {
        let day = &grid.days()[r.day].id;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.bus,
            r.phase.letter(),
            day,
            r.hour,
            r.p_load,
            r.q_load,
            r.p_pv,
            r.q_pv
        );
    }
    s
}

/// Reads one day of an ESS schedule; hours must run 0, 1, ... in order.
pub fn read_schedule(text: &str) -> Result<EssSchedule, TableError> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &SCHEDULE_HEADER)?;
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let hour: usize = field(&rec, 0, "hour")?;
        if hour != plus.len() {
            let row = rec.position().map_or(0, |p| p.line() as usize);
            return Err(TableError::Row { row, msg: format!("expected hour {}, found {hour}", plus.len()) });
        }
        plus.push(field(&rec, 1, "p_plus_kw_per_phase")?);
        minus.push(field(&rec, 2, "p_minus_kw_per_phase")?);
    }
    Ok(EssSchedule::new(plus, minus))
}

pub fn write_schedule(s: &EssSchedule) -> String {
    let mut out = SCHEDULE_HEADER.join(",");
    out.push('\n');
    for h in 0..s.len() {
        let _ = writeln!(out, "{h},{},{}", s.p_plus[h], s.p_minus[h]);
    }
    out
}
