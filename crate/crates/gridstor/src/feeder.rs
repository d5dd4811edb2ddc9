//! Plain-text feeder files.
//!
//! ```text
//! # comment
//! [SOURCE]
//! # bus v_sub v_min v_max base_voltage   (volts, phase-to-neutral)
//! 1 230 216.2 253 230
//! [BUS]
//! # id phases load pv ess_candidate
//! 1 ABC - - 0
//! 2 ABC AB C 1
//! [LINE]
//! # from to Ra Rb Rc Xa Xb Xc   (ohms)
//! 1 2 0.1 0.1 0.1 0.05 0.05 0.05
//! ```
//!
//! Phase fields are letter sets such as `ABC` or `B`; `-` means none.
//! Numbers use `.` as the decimal point; `inf` is accepted for `v_max`.

use std::fmt::Write as _;

use gridstor_core::{
    validate_radial, Bus, BusId, Line, Network, NetworkError, PhaseSet, PhaseTriple, RadialViolation, Source,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing [{0}] section")]
    MissingSection(&'static str),
    #[error("duplicate bus id {id} (line {line})")]
    DuplicateBus { id: BusId, line: usize },
    #[error("line record at line {line} references bus {bus}, which is not in [BUS]")]
    DanglingEndpoint { line: usize, bus: BusId },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Parsed feeder records before the radial and electrical checks.
#[derive(Clone, Debug, PartialEq)]
pub struct FeederFile {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub source: Source,
}

impl FeederFile {
    pub fn radial_check(&self) -> Result<(), RadialViolation> {
        validate_radial(&self.buses, &self.lines, self.source.bus)
    }

    pub fn into_network(self) -> Result<Network, FeederError> {
        Ok(Network::new(self.buses, self.lines, self.source)?)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Bus,
    Line,
    Source,
}

fn syntax(line: usize, msg: impl Into<String>) -> FeederError {
    FeederError::Syntax { line, msg: msg.into() }
}

fn num(tok: &str, line: usize, what: &str) -> Result<f64, FeederError> {
    let v: f64 = tok.parse().map_err(|_| syntax(line, format!("{what}: not a number: {tok:?}")))?;
    if v.is_nan() {
        return Err(syntax(line, format!("{what}: NaN")));
    }
    Ok(v)
}

fn bus_id(tok: &str, line: usize) -> Result<BusId, FeederError> {
    tok.parse().map_err(|_| syntax(line, format!("bad bus id {tok:?}")))
}

fn phases(tok: &str, line: usize, allow_empty: bool) -> Result<PhaseSet, FeederError> {
    match PhaseSet::from_letters(tok) {
        Some(p) if allow_empty || !p.is_empty() => Ok(p),
        _ => Err(syntax(line, format!("bad phase set {tok:?}"))),
    }
}

/// Reads the records and checks syntax, bus-id uniqueness and line
/// endpoints. Topology is left to [`FeederFile::radial_check`].
pub fn parse_feeder(text: &str) -> Result<FeederFile, FeederError> {
    let mut section = Section::None;
    let mut buses: Vec<(usize, Bus)> = Vec::new();
    let mut lines: Vec<(usize, Line)> = Vec::new();
    let mut source: Option<Source> = None;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if body.starts_with('[') {
            section = match body {
                "[BUS]" => Section::Bus,
                "[LINE]" => Section::Line,
                "[SOURCE]" => Section::Source,
                _ => return Err(syntax(ln, format!("unknown section {body}"))),
            };
            continue;
        }
        let f: Vec<&str> = body.split_whitespace().collect();
        match section {
            Section::None => return Err(syntax(ln, "record outside any section")),
            Section::Bus => {
                if f.len() != 5 {
                    return Err(syntax(ln, format!("bus record needs 5 fields, found {}", f.len())));
                }
                let ess_candidate = match f[4] {
                    "0" => false,
                    "1" => true,
                    t => return Err(syntax(ln, format!("ess_candidate must be 0 or 1, found {t:?}"))),
                };
                let bus = Bus {
                    id: bus_id(f[0], ln)?,
                    phases: phases(f[1], ln, false)?,
                    load: phases(f[2], ln, true)?,
                    pv: phases(f[3], ln, true)?,
                    ess_candidate,
                };
                if buses.iter().any(|(_, b)| b.id == bus.id) {
                    return Err(FeederError::DuplicateBus { id: bus.id, line: ln });
                }
                buses.push((ln, bus));
            }
            Section::Line => {
                if f.len() != 8 {
                    return Err(syntax(ln, format!("line record needs 8 fields, found {}", f.len())));
                }
                let v: Vec<f64> = f[2..].iter().map(|t| num(t, ln, "impedance")).collect::<Result<_, _>>()?;
                lines.push((
                    ln,
                    Line {
                        from: bus_id(f[0], ln)?,
                        to: bus_id(f[1], ln)?,
                        resistance: PhaseTriple::new(v[0], v[1], v[2]),
                        reactance: PhaseTriple::new(v[3], v[4], v[5]),
                    },
                ));
            }
            Section::Source => {
                if source.is_some() {
                    return Err(syntax(ln, "only one source record allowed"));
                }
                if f.len() != 5 {
                    return Err(syntax(ln, format!("source record needs 5 fields, found {}", f.len())));
                }
                source = Some(Source {
                    bus: bus_id(f[0], ln)?,
                    v_sub: num(f[1], ln, "v_sub")?,
                    v_min: num(f[2], ln, "v_min")?,
                    v_max: num(f[3], ln, "v_max")?,
                    base_voltage: num(f[4], ln, "base_voltage")?,
                });
            }
        }
    }
    let source = source.ok_or(FeederError::MissingSection("SOURCE"))?;
    if buses.is_empty() {
        return Err(FeederError::MissingSection("BUS"));
    }
    for (ln, l) in &lines {
        for end in [l.from, l.to] {
            if !buses.iter().any(|(_, b)| b.id == end) {
                return Err(FeederError::DanglingEndpoint { line: *ln, bus: end });
            }
        }
    }
    Ok(FeederFile {
        buses: buses.into_iter().map(|(_, b)| b).collect(),
        lines: lines.into_iter().map(|(_, l)| l).collect(),
        source,
    })
}

/// Parses and builds a validated [`Network`].
pub fn parse_network(text: &str) -> Result<Network, FeederError> {
    parse_feeder(text)?.into_network()
}

/// Writes `net` in the feeder format; numbers are printed so that they
/// parse back to the same bits.
pub fn write_network(net: &Network) -> String {
    let mut s = String::new();
    let src = net.source();
    s.push_str("[SOURCE]\n# bus v_sub_V v_min_V v_max_V base_voltage_V\n");
    let _ = writeln!(s, "{} {} {} {} {}", src.bus, src.v_sub, src.v_min, src.v_max, src.base_voltage);
    s.push_str("\n[BUS]\n# id phases load pv ess_candidate\n");
    for b in net.buses() {
        let _ = writeln!(s, "{} {} {} {} {}", b.id, b.phases, b.load, b.pv, u8::from(b.ess_candidate));
    }
    s.push_str("\n[LINE]\n# from to Ra Rb Rc Xa Xb Xc (ohm)\n");
    for l in net.lines() {
        let (r, x) = (l.resistance, l.reactance);
        let _ = writeln!(s, "{} {} {} {} {} {} {} {}", l.from, l.to, r.a, r.b, r.c, x.a, x.b, x.c);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "\
# smallest feeder
[SOURCE]
1 230 216.2 253 230
[BUS]
1 ABC - - 0
2 ABC ABC ABC 1   # consumer
[LINE]
1 2 0.1 0.1 0.1 0.1 0.1 0.1
";

    #[test]
    fn two_bus_parses() {
        let net = parse_network(TWO_BUS).unwrap();
        assert_eq!(net.bus_count(), 2);
        assert_eq!(net.lines().len(), 1);
        assert_eq!(net.substation(), 1);
        assert!(net.bus(2).unwrap().ess_candidate);
    }

    #[test]
    fn dangling_endpoint_is_reported() {
        let text = TWO_BUS.replace("1 2 0.1", "1 99 0.1");
        match parse_network(&text) {
            Err(FeederError::DanglingEndpoint { bus: 99, line: 8 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_bus_is_reported() {
        let text = TWO_BUS.replace("1 ABC - - 0", "1 ABC - - 0\n1 ABC - - 0");
        assert!(matches!(parse_network(&text), Err(FeederError::DuplicateBus { id: 1, line: 6 })));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let text = TWO_BUS.replace("0.1 0.1 0.1 0.1 0.1 0.1", "0.1 x 0.1 0.1 0.1 0.1");
        match parse_network(&text) {
            Err(FeederError::Syntax { line: 8, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_feeder("1 ABC - - 0"), Err(FeederError::Syntax { line: 1, .. })));
        assert!(matches!(parse_feeder("[BUS]\n1 ABC - - 2"), Err(FeederError::Syntax { line: 2, .. })));
        assert!(matches!(parse_feeder("[BUS]\n1 ABC - - 0"), Err(FeederError::MissingSection("SOURCE"))));
        assert!(matches!(parse_feeder("[FOO]"), Err(FeederError::Syntax { line: 1, .. })));
    }

    #[test]
    fn infinite_upper_limit_is_accepted() {
        let net = parse_network(&TWO_BUS.replace("216.2 253", "216.2 inf")).unwrap();
        assert!(net.source().v_max.is_infinite());
        let again = parse_network(&write_network(&net)).unwrap();
        assert!(again.source().v_max.is_infinite());
    }

    #[test]
    fn triangle_is_flagged_not_rejected_by_the_parser() {
        let text = "[SOURCE]\n1 230 200 250 230\n[BUS]\n1 ABC - - 0\n2 ABC - - 0\n3 ABC - - 0\n[LINE]\n\
                    1 2 1 1 1 1 1 1\n2 3 1 1 1 1 1 1\n3 1 1 1 1 1 1 1\n";
        let f = parse_feeder(text).unwrap();
        let v = f.radial_check().unwrap_err();
        assert!(v.cycle.is_some());
        assert!(f.into_network().is_err());
    }
}
