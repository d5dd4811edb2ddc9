//! CSV reports, plot data and atomic file writes.

use std::fs;
use std::io::{self, Write as _};
use std::path::Path;

use gridstor_core::{
    soc_trajectory, BusId, DessBaseline, DessRow, EssTemplate, IndexReport, Placement, TimeGrid, VufStudy,
};

/// Writes via a temporary sibling and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| io::Error::other("output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(contents.as_bytes())?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// Small CSV builder; fields are quoted only when they need it.
pub struct Csv {
    w: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Csv { w }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).expect("in-memory write");
    }

    pub fn finish(self) -> String {
        String::from_utf8(self.w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

pub const REPORT_HEADER: [&str; 8] = ["scenario", "index", "value", "unit", "bus", "phase", "day", "hour"];
pub const VUF_HEADER: [&str; 4] = ["day", "hour", "bus", "vuf_percent"];
pub const SWEEP_HEADER: [&str; 11] = [
    "n_ess",
    "buses",
    "capacities_kwh",
    "total_capacity_kwh",
    "objective_loss_kwh",
    "annual_loss_kwh",
    "loss_reduction_percent",
    "hosting_kw",
    "hosting_increase_percent",
    "vuf_max_percent",
    "vuf_avg_percent",
];

pub const VUF_AVG_NOTE: &str = "percent (mean over three-phase buses and represented hours; days weighted)";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Index rows for one scenario of a report.
pub fn report_rows(csv: &mut Csv, scenario: &str, r: &IndexReport, grid: &TimeGrid, vuf_reference: f64) {
    let l = &r.losses;
    let num = |v: f64| v.to_string();
    csv.row([scenario, "annual_loss", &num(l.annual_kwh), "kWh", "", "", "", ""]);
    for (season, kwh) in &l.seasonal_kwh {
        csv.row([scenario, &format!("seasonal_loss_{season}"), &num(*kwh), "kWh", "", "", "", ""]);
    }
    let h = &r.hosting;
    let (bus, phase, hour) = match &h.binding {
        Some(b) => (b.bus.to_string(), b.phase.letter().to_string(), b.hour.to_string()),
        None => Default::default(),
    };
    let day = if h.binding.is_some() { grid.days()[h.day].id.clone() } else { String::new() };
    csv.row([scenario, "hosting_total", &num(h.hosting_kw), "kW", &bus, &phase, &day, &hour]);
    csv.row([scenario, "hosting_per_system", &num(h.per_system_kw), "kW", &bus, &phase, &day, &hour]);
    csv.row([scenario, "hosting_pv_scale", &num(h.alpha), "1", "", "", "", ""]);
    let v = &r.vuf;
    let (vb, vd, vh) = match v.max_at {
        Some((b, d, t)) => (b.to_string(), grid.days()[d].id.clone(), t.to_string()),
        None => Default::default(),
    };
    csv.row([scenario, "vuf_max", &num(v.max_percent), "percent", &vb, "", &vd, &vh]);
    csv.row([scenario, "vuf_avg", &num(v.avg_percent), VUF_AVG_NOTE, "", "", "", ""]);
    csv.row([scenario, "vuf_reference", &num(vuf_reference), "percent", "", "", "", ""]);
}

pub fn vuf_series(v: &VufStudy, grid: &TimeGrid) -> String {
    let mut csv = Csv::new(&VUF_HEADER);
    for s in &v.series {
        csv.row([grid.days()[s.day].id.clone(), s.hour.to_string(), s.bus.to_string(), s.vuf_percent.to_string()]);
    }
    csv.finish()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

/// Table of DESS rows led by the feeder without storage as `n_ess = 0`.
pub fn sweep_table(base: &DessBaseline, rows: &[DessRow]) -> String {
    let mut csv = Csv::new(&SWEEP_HEADER);
    let b = base;
    csv.row([
        "0".into(),
        String::new(),
        String::new(),
        "0".into(),
        String::new(),
        b.annual_loss_kwh.to_string(),
        "0".into(),
        b.hosting_kw.to_string(),
        "0".into(),
        b.vuf_max_percent.to_string(),
        b.vuf_avg_percent.to_string(),
    ]);
    for r in rows {
        csv.row([
            r.n.to_string(),
            join(&r.buses),
            join(&r.capacities_kwh),
            r.capacities_kwh.iter().sum::<f64>().to_string(),
            r.objective_kwh.to_string(),
            r.annual_loss_kwh.to_string(),
            r.loss_reduction_percent.to_string(),
            r.hosting_kw.to_string(),
            r.hosting_increase_percent.to_string(),
            r.vuf_max_percent.to_string(),
            r.vuf_avg_percent.to_string(),
        ]);
    }
    csv.finish()
}

pub fn loss_vs_n(rows: &[DessRow]) -> String {
    let mut csv = Csv::new(&["n_ess", "objective_loss_kwh", "annual_loss_kwh", "loss_reduction_percent"]);
    for r in rows {
        csv.row([
            r.n.to_string(),
            r.objective_kwh.to_string(),
            r.annual_loss_kwh.to_string(),
            r.loss_reduction_percent.to_string(),
        ]);
    }
    csv.finish()
}

pub fn hosting_vs_n(rows: &[DessRow]) -> String {
    let mut csv = Csv::new(&["n_ess", "hosting_kw", "hosting_increase_percent"]);
    for r in rows {
        csv.row([r.n.to_string(), r.hosting_kw.to_string(), r.hosting_increase_percent.to_string()]);
    }
    csv.finish()
}

/// Hourly schedules and state of charge of every unit.
pub fn schedule_plot(placements: &[Placement], template: &EssTemplate, grid: &TimeGrid) -> String {
    let mut csv = Csv::new(&[
        "bus",
        "day",
        "hour",
        "p_plus_kw_per_phase",
        "p_minus_kw_per_phase",
        "soc_start_kwh",
        "soc_end_kwh",
    ]);
    for p in placements {
        let spec = template.spec(p.capacity_kwh, p.e0_kwh);
        for (d, s) in grid.days().iter().zip(&p.schedules) {
            let soc = soc_trajectory(&spec, s, grid.delta_t());
            for h in 0..s.len() {
                csv.row([
                    p.bus.to_string(),
                    d.id.clone(),
                    h.to_string(),
                    s.p_plus[h].to_string(),
                    s.p_minus[h].to_string(),
                    soc[h].to_string(),
                    soc[h + 1].to_string(),
                ]);
            }
        }
    }
    csv.finish()
}

pub fn placement_rows(csv: &mut Csv, scenario: &str, placements: &[Placement]) {
    let total: f64 = placements.iter().map(|p| p.capacity_kwh).sum();
    csv.row([scenario, "ess_count", &placements.len().to_string(), "1", "", "", "", ""]);
    csv.row([scenario, "ess_total_capacity", &total.to_string(), "kWh", "", "", "", ""]);
    for p in placements {
        csv.row([scenario, "ess_capacity", &p.capacity_kwh.to_string(), "kWh", &p.bus.to_string(), "", "", ""]);
    }
}

pub fn value_row(csv: &mut Csv, scenario: &str, index: &str, value: f64, unit: &str, bus: Option<BusId>) {
    csv.row([scenario, index, &value.to_string(), unit, &opt(bus), "", "", ""]);
}
