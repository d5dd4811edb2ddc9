use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn gridstor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridstor")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Loads a fixture config, applies `edit` and writes it next to an absolute
/// feeder path inside `dir`.
fn edited_config(dir: &Path, fixture: &str, edit: impl FnOnce(&mut toml::Table)) -> PathBuf {
    let mut t: toml::Table = fs::read_to_string(data(fixture)).unwrap().parse().unwrap();
    let feeder = data(t["feeder"].as_str().unwrap());
    t.insert("feeder".into(), toml::Value::String(path_str(&feeder).into()));
    edit(&mut t);
    let path = dir.join("config.toml");
    fs::write(&path, toml::to_string(&t).unwrap()).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(str::to_owned).collect()).collect();
    (header, rows)
}

#[test]
fn validate_accepts_the_two_bus_feeder() {
    let out = gridstor(&["validate", "--config", path_str(&data("two_bus.toml"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}

#[test]
fn bad_config_exits_2_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "feeder = 3\n").unwrap();
    let out = gridstor(&["validate", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert_eq!(err["exit_code"], 2);
    assert_eq!(err["error"], "config");
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = gridstor(&["baseline", "--config", "/nonexistent/gridstor.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unsatisfiable_voltage_limits_exit_4() {
    // Constant demand on the only candidate bus: holding the far end above
    // v_min needs discharge every hour, which the cyclic state of charge
    // cannot provide.
    let dir = tempfile::tempdir().unwrap();
    let feeder =
        fs::read_to_string(data("two_bus.txt")).unwrap().replace("1 230 216.2 253 230", "1 230 229.99 253 230");
    let feeder_path = dir.path().join("tight.txt");
    fs::write(&feeder_path, feeder).unwrap();
    let cfg = edited_config(dir.path(), "two_bus.toml", |t| {
        t.insert("feeder".into(), toml::Value::String(path_str(&feeder_path).into()));
        let mut synth = t["profiles"]["synth"].as_table().unwrap().clone();
        synth.insert("noise".into(), toml::Value::Float(0.0));
        let season = &mut synth["seasons"].as_array_mut().unwrap()[0];
        season.as_table_mut().unwrap().insert("base_load_kw".into(), toml::Value::Float(1.5));
        t["profiles"].as_table_mut().unwrap().insert("synth".into(), toml::Value::Table(synth));
    });
    let out_dir = dir.path().join("out");
    let out = gridstor(&["size", "--config", path_str(&cfg), "--out", path_str(&out_dir)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "infeasible");
}

#[test]
fn zero_load_feeder_has_zero_indices() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridstor(&["baseline", "--config", path_str(&data("zero_load.toml")), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("baseline_report.csv"));
    let (index, value) =
        (header.iter().position(|h| h == "index").unwrap(), header.iter().position(|h| h == "value").unwrap());
    for r in &rows {
        let v: f64 = r[value].parse().unwrap();
        match r[index].as_str() {
            "vuf_reference" => {}
            "vuf_max" | "vuf_avg" => assert!(v.abs() <= 1e-10, "{} = {v}", r[index]),
            other => assert_eq!(v, 0.0, "{other}"),
        }
    }
}

const UNIT_SUFFIXES: [&str; 7] = ["_kw", "_kwh", "_kvar", "_percent", "_kw_per_phase", "_kwh_per_phase", "_v"];
// Columns that are labels, counts or carry their unit in a sibling column.
const UNITLESS: [&str; 9] = ["scenario", "index", "value", "unit", "bus", "buses", "phase", "day", "hour"];

fn check_units(path: &Path) {
    let (header, rows) = read_csv(path);
    for h in &header {
        let ok = UNITLESS.contains(&h.as_str()) || h == "n_ess" || UNIT_SUFFIXES.iter().any(|s| h.ends_with(s));
        assert!(ok, "{}: column {h:?} declares no unit", path.display());
    }
    if let Some(u) = header.iter().position(|h| h == "unit") {
        for r in &rows {
            assert!(!r[u].is_empty(), "{}: row without unit: {r:?}", path.display());
        }
    }
}

fn csv_files(dir: &Path, acc: &mut Vec<PathBuf>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            csv_files(&p, acc);
        } else if p.extension().is_some_and(|x| x == "csv") {
            acc.push(p);
        }
    }
}

fn one_summer_day(t: &mut toml::Table) {
    let grid = t["grid"].as_table_mut().unwrap();
    let summer = grid["days"].as_array().unwrap()[0].clone();
    let mut summer = summer.as_table().unwrap().clone();
    summer.insert("weight_days".into(), toml::Value::Float(365.0));
    grid.insert("days".into(), toml::Value::Array(vec![toml::Value::Table(summer)]));
}

#[test]
fn sweep_objective_does_not_increase_and_csvs_declare_units() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited_config(dir.path(), "reference12.toml", one_summer_day);
    let out_dir = dir.path().join("out");
    for cmd in ["sweep", "size"] {
        let out = gridstor(&[cmd, "--config", path_str(&cfg), "--out", path_str(&out_dir)]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }

    let (header, rows) = read_csv(&out_dir.join("sweep.csv"));
    let n = header.iter().position(|h| h == "n_ess").unwrap();
    let obj = header.iter().position(|h| h == "objective_loss_kwh").unwrap();
    let sized: Vec<(usize, f64)> =
        rows.iter().filter(|r| !r[obj].is_empty()).map(|r| (r[n].parse().unwrap(), r[obj].parse().unwrap())).collect();
    assert_eq!(sized.iter().map(|s| s.0).collect::<Vec<_>>(), [1, 2, 3]);
    for w in sized.windows(2) {
        // the solver tolerance bounds how far a larger budget may look worse
        assert!(w[1].1 <= w[0].1 * (1.0 + 1e-6), "objective rose from N={} to N={}: {:?}", w[0].0, w[1].0, sized);
    }

    let mut files = Vec::new();
    csv_files(&out_dir, &mut files);
    assert!(files.len() >= 6, "{files:?}");
    for f in &files {
        check_units(f);
    }
}
