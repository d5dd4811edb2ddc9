//! Three-phase radial feeder model.
//!
//! A [`Network`] can only be obtained through [`Network::new`], which checks
//! every invariant (unique ids, existing endpoints, positive impedances,
//! voltage window, radiality) and precomputes the tree orientation used by
//! the solvers. Phases are decoupled: there is no mutual impedance.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

use thiserror::Error;

/// Bus identifier as it appears in feeder data (arbitrary integers).
pub type BusId = i64;

/// Per-phase power base in kVA. With this base a per-unit power equals kW.
pub const S_BASE_KVA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'A',
            Phase::B => 'B',
            Phase::C => 'C',
        }
    }

    pub fn from_letter(c: char) -> Option<Phase> {
        match c {
            'A' | 'a' => Some(Phase::A),
            'B' | 'b' => Some(Phase::B),
            'C' | 'c' => Some(Phase::C),
            _ => None,
        }
    }

    /// Nominal angle of the phase at the substation (radians).
    pub fn nominal_angle(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -2.0 * core::f64::consts::FRAC_PI_3,
            Phase::C => 2.0 * core::f64::consts::FRAC_PI_3,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Subset of {A, B, C}.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const EMPTY: PhaseSet = PhaseSet(0);
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn insert(&mut self, p: Phase) {
        self.0 |= 1 << p.index();
    }

    pub fn with(mut self, p: Phase) -> Self {
        self.insert(p);
        self
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Parses `ABC`-style letter sets; `-` is the empty set.
    pub fn from_letters(s: &str) -> Option<PhaseSet> {
        if s == "-" {
            return Some(PhaseSet::EMPTY);
        }
        let mut set = PhaseSet::EMPTY;
        for c in s.chars() {
            let p = Phase::from_letter(c)?;
            if set.contains(p) {
                return None;
            }
            set.insert(p);
        }
        if set.is_empty() {
            None
        } else {
            Some(set)
        }
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        for p in self.iter() {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

/// One value per phase. The unit depends on context.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PhaseTriple {
    pub const ZERO: PhaseTriple = PhaseTriple { a: 0.0, b: 0.0, c: 0.0 };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        PhaseTriple { a, b, c }
    }

    pub fn splat(v: f64) -> Self {
        PhaseTriple { a: v, b: v, c: v }
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        PhaseTriple::new(f(self.a), f(self.b), f(self.c))
    }

    pub fn zip(self, o: PhaseTriple, f: impl Fn(f64, f64) -> f64) -> Self {
        PhaseTriple::new(f(self.a, o.a), f(self.b, o.b), f(self.c, o.c))
    }

    pub fn sum(self) -> f64 {
        self.a + self.b + self.c
    }

    pub fn is_finite(self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }

    pub fn iter(self) -> impl Iterator<Item = (Phase, f64)> {
        Phase::ALL.into_iter().map(move |p| (p, self[p]))
    }
}

impl Index<Phase> for PhaseTriple {
    type Output = f64;
    fn index(&self, p: Phase) -> &f64 {
        match p {
            Phase::A => &self.a,
            Phase::B => &self.b,
            Phase::C => &self.c,
        }
    }
}

impl IndexMut<Phase> for PhaseTriple {
    fn index_mut(&mut self, p: Phase) -> &mut f64 {
        match p {
            Phase::A => &mut self.a,
            Phase::B => &mut self.b,
            Phase::C => &mut self.c,
        }
    }
}

impl core::ops::Add for PhaseTriple {
    type Output = PhaseTriple;
    fn add(self, o: PhaseTriple) -> PhaseTriple {
        self.zip(o, |x, y| x + y)
    }
}

impl core::ops::Sub for PhaseTriple {
    type Output = PhaseTriple;
    fn sub(self, o: PhaseTriple) -> PhaseTriple {
        self.zip(o, |x, y| x - y)
    }
}

impl core::ops::AddAssign for PhaseTriple {
    fn add_assign(&mut self, o: PhaseTriple) {
        *self = *self + o;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub phases: PhaseSet,
    pub load: PhaseSet,
    pub pv: PhaseSet,
    pub ess_candidate: bool,
}

impl Bus {
    /// A three-phase bus with no load, PV or storage.
    pub fn junction(id: BusId) -> Self {
        Bus { id, phases: PhaseSet::ABC, load: PhaseSet::EMPTY, pv: PhaseSet::EMPTY, ess_candidate: false }
    }
}

/// Three-phase line; ohms per phase.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    pub resistance: PhaseTriple,
    pub reactance: PhaseTriple,
}

impl Line {
    pub fn uniform(from: BusId, to: BusId, r: f64, x: f64) -> Self {
        Line { from, to, resistance: PhaseTriple::splat(r), reactance: PhaseTriple::splat(x) }
    }
}

/// Substation source: bus and voltages (phase-to-neutral volts).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Source {
    pub bus: BusId,
    pub v_sub: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub base_voltage: f64,
}

/// Why a bus/line set is not a tree rooted at the substation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RadialViolation {
    /// Lines referencing ids missing from the bus list (line index, id).
    pub unknown_endpoints: Vec<(usize, BusId)>,
    /// Lines whose two ends are the same bus.
    pub self_loops: Vec<usize>,
    /// Bus ids around the first cycle found, in traversal order.
    pub cycle: Option<Vec<BusId>>,
    /// Buses unreachable from the substation.
    pub disconnected: Vec<BusId>,
    pub substation_missing: bool,
}

impl RadialViolation {
    fn is_clean(&self) -> bool {
        self.unknown_endpoints.is_empty()
            && self.self_loops.is_empty()
            && self.cycle.is_none()
            && self.disconnected.is_empty()
            && !self.substation_missing
    }
}

impl fmt::Display for RadialViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut sep = |f: &mut fmt::Formatter<'_>| {
            if !first {
                f.write_str("; ")?;
            }
            first = false;
            Ok::<(), fmt::Error>(())
        };
        if self.substation_missing {
            sep(f)?;
            f.write_str("substation bus missing")?;
        }
        for (line, id) in &self.unknown_endpoints {
            sep(f)?;
            write!(f, "line {line} references unknown bus {id}")?;
        }
        for line in &self.self_loops {
            sep(f)?;
            write!(f, "line {line} is a self-loop")?;
        }
        if let Some(cycle) = &self.cycle {
            sep(f)?;
            f.write_str("cycle through buses")?;
            for id in cycle {
                write!(f, " {id}")?;
            }
        }
        if !self.disconnected.is_empty() {
            sep(f)?;
            f.write_str("disconnected buses")?;
            for id in &self.disconnected {
                write!(f, " {id}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),
    #[error("line {line} references bus {bus}, which is not defined")]
    DanglingEndpoint { line: usize, bus: BusId },
    #[error("line {line} connects bus {bus} to itself")]
    SelfLoop { line: usize, bus: BusId },
    #[error("substation bus {0} is not defined")]
    UnknownSubstation(BusId),
    #[error("line {line} phase {phase}: impedance must be finite and strictly positive")]
    BadImpedance { line: usize, phase: Phase },
    #[error("bus {bus}: load/PV flag on a phase the bus does not have")]
    FlagOnAbsentPhase { bus: BusId },
    #[error("bus {bus} has no phases")]
    NoPhases { bus: BusId },
    #[error(
        "voltage window must satisfy v_min < v_sub < v_max with finite v_min, v_sub (got {v_min}, {v_sub}, {v_max})"
    )]
    VoltageWindow { v_min: f64, v_sub: f64, v_max: f64 },
    #[error("base voltage must be finite and positive, got {0}")]
    BaseVoltage(f64),
    #[error("network is not radial: {0}")]
    NotRadial(RadialViolation),
}

/// Radial orientation of the feeder, all in bus/line indices.
#[derive(Clone, Debug)]
pub(crate) struct Topology {
    pub index_of: BTreeMap<BusId, usize>,
    pub root: usize,
    /// Bus indices in breadth-first order from the root.
    pub order: Vec<usize>,
    pub depth: Vec<usize>,
    pub parent_line: Vec<Option<usize>>,
    /// Upstream and downstream bus index of each line.
    pub line_up: Vec<usize>,
    pub line_down: Vec<usize>,
    /// Lines leaving each bus away from the root.
    pub child_lines: Vec<Vec<usize>>,
}

/// Validated radial three-phase feeder. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Network {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    source: Source,
    topo: Topology,
    r_pu: Vec<PhaseTriple>,
    x_pu: Vec<PhaseTriple>,
}

impl Network {
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>, source: Source) -> Result<Self, NetworkError> {
        let mut index_of = BTreeMap::new();
        for (i, b) in buses.iter().enumerate() {
            if index_of.insert(b.id, i).is_some() {
                return Err(NetworkError::DuplicateBus(b.id));
            }
            if b.phases.is_empty() {
                return Err(NetworkError::NoPhases { bus: b.id });
            }
            if !b.load.is_subset(b.phases) || !b.pv.is_subset(b.phases) {
                return Err(NetworkError::FlagOnAbsentPhase { bus: b.id });
            }
        }
        for (li, l) in lines.iter().enumerate() {
            for end in [l.from, l.to] {
                if !index_of.contains_key(&end) {
                    return Err(NetworkError::DanglingEndpoint { line: li, bus: end });
                }
            }
            if l.from == l.to {
                return Err(NetworkError::SelfLoop { line: li, bus: l.from });
            }
            for p in Phase::ALL {
                let (r, x) = (l.resistance[p], l.reactance[p]);
                if !(r.is_finite() && x.is_finite() && r > 0.0 && x > 0.0) {
                    return Err(NetworkError::BadImpedance { line: li, phase: p });
                }
            }
        }
        if !index_of.contains_key(&source.bus) {
            return Err(NetworkError::UnknownSubstation(source.bus));
        }
        let ok_window = source.v_min.is_finite()
            && source.v_sub.is_finite()
            && !source.v_max.is_nan()
            && source.v_min < source.v_sub
            && source.v_sub < source.v_max;
        if !ok_window {
            return Err(NetworkError::VoltageWindow { v_min: source.v_min, v_sub: source.v_sub, v_max: source.v_max });
        }
        if !(source.base_voltage.is_finite() && source.base_voltage > 0.0) {
            return Err(NetworkError::BaseVoltage(source.base_voltage));
        }
        validate_radial(&buses, &lines, source.bus).map_err(NetworkError::NotRadial)?;

        let topo = orient(&buses, &lines, index_of, source.bus);
        let z_base = source.base_voltage * source.base_voltage / (S_BASE_KVA * 1000.0);
        let r_pu = lines.iter().map(|l| l.resistance.map(|r| r / z_base)).collect();
        let x_pu = lines.iter().map(|l| l.reactance.map(|x| x / z_base)).collect();
        Ok(Network { buses, lines, source, topo, r_pu, x_pu })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn substation(&self) -> BusId {
        self.source.bus
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.topo.index_of.get(&id).copied()
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.bus_index(id).map(|i| &self.buses[i])
    }

    pub fn root_index(&self) -> usize {
        self.topo.root
    }

    /// Bus indices in breadth-first order from the substation.
    pub fn bfs_order(&self) -> &[usize] {
        &self.topo.order
    }

    pub fn depth(&self, bus_index: usize) -> usize {
        self.topo.depth[bus_index]
    }

    pub fn parent_line(&self, bus_index: usize) -> Option<usize> {
        self.topo.parent_line[bus_index]
    }

    /// (upstream, downstream) bus indices of a line.
    pub fn line_ends(&self, line: usize) -> (usize, usize) {
        (self.topo.line_up[line], self.topo.line_down[line])
    }

    pub fn child_lines(&self, bus_index: usize) -> &[usize] {
        &self.topo.child_lines[bus_index]
    }

    /// Lines from the substation down to `bus_index`, root side first.
    pub fn path_lines(&self, bus_index: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.topo.depth[bus_index]);
        let mut b = bus_index;
        while let Some(l) = self.topo.parent_line[b] {
            path.push(l);
            b = self.topo.line_up[l];
        }
        path.reverse();
        path
    }

    /// Per-unit resistance of every line (ohms / base impedance).
    pub fn r_pu(&self) -> &[PhaseTriple] {
        &self.r_pu
    }

    pub fn x_pu(&self) -> &[PhaseTriple] {
        &self.x_pu
    }

    pub fn v_sub_pu(&self) -> f64 {
        self.source.v_sub / self.source.base_voltage
    }

    pub fn v_min_pu(&self) -> f64 {
        self.source.v_min / self.source.base_voltage
    }

    pub fn v_max_pu(&self) -> f64 {
        self.source.v_max / self.source.base_voltage
    }

    pub fn base_voltage(&self) -> f64 {
        self.source.base_voltage
    }

    /// Same feeder with a different voltage window.
    pub fn with_voltage_limits(&self, v_min: f64, v_max: f64) -> Result<Network, NetworkError> {
        let mut source = self.source;
        source.v_min = v_min;
        source.v_max = v_max;
        Network::new(self.buses.clone(), self.lines.clone(), source)
    }

    /// Downstream bus indices of each line, computed bottom-up on the tree.
    pub fn downstream_indices(&self) -> Vec<Vec<usize>> {
        let n_lines = self.lines.len();
        let mut below: Vec<Vec<usize>> = vec![Vec::new(); n_lines];
        for &b in self.topo.order.iter().rev() {
            let Some(l) = self.topo.parent_line[b] else { continue };
            let mut set = vec![b];
            for &c in &self.topo.child_lines[b] {
                set.extend_from_slice(&below[c]);
            }
            set.sort_unstable();
            below[l] = set;
        }
        below
    }
}

/// Checks that `lines` form a tree over `buses` rooted at `substation`.
///
/// Violations are returned, never raised: unknown endpoints, self-loops, the
/// first cycle found and every bus unreachable from the substation.
pub fn validate_radial(buses: &[Bus], lines: &[Line], substation: BusId) -> Result<(), RadialViolation> {
    let mut report = RadialViolation::default();
    let index_of: BTreeMap<BusId, usize> = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let n = buses.len();
    if !index_of.contains_key(&substation) {
        report.substation_missing = true;
    }

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (li, l) in lines.iter().enumerate() {
        let (Some(&u), Some(&v)) = (index_of.get(&l.from), index_of.get(&l.to)) else {
            for end in [l.from, l.to] {
                if !index_of.contains_key(&end) {
                    report.unknown_endpoints.push((li, end));
                }
            }
            continue;
        };
        if u == v {
            report.self_loops.push(li);
            continue;
        }
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru == rv {
            if report.cycle.is_none() {
                // Path u -> v in the forest so far closes the cycle.
                let path = forest_path(&adjacency, u, v);
                report.cycle = Some(path.into_iter().map(|i| buses[i].id).collect());
            }
            continue;
        }
        parent[ru] = rv;
        adjacency[u].push(v);
        adjacency[v].push(u);
    }

    if let Some(&root) = index_of.get(&substation) {
        // Reachability over every well-formed line, cycles included.
        let mut full: Vec<Vec<usize>> = vec![Vec::new(); n];
        for l in lines {
            if let (Some(&u), Some(&v)) = (index_of.get(&l.from), index_of.get(&l.to)) {
                full[u].push(v);
                full[v].push(u);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &full[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        let mut missing: Vec<BusId> = (0..n).filter(|&i| !seen[i]).map(|i| buses[i].id).collect();
        missing.sort_unstable();
        report.disconnected = missing;
    }

    if report.is_clean() {
        Ok(())
    } else {
        Err(report)
    }
}

fn forest_path(adjacency: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
    let n = adjacency.len();
    let mut prev = vec![usize::MAX; n];
    let mut queue = VecDeque::from([from]);
    prev[from] = from;
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &v in &adjacency[u] {
            if prev[v] == usize::MAX {
                prev[v] = u;
                queue.push_back(v);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    path
}

fn orient(buses: &[Bus], lines: &[Line], index_of: BTreeMap<BusId, usize>, substation: BusId) -> Topology {
    let n = buses.len();
    let root = index_of[&substation];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (li, l) in lines.iter().enumerate() {
        incident[index_of[&l.from]].push(li);
        incident[index_of[&l.to]].push(li);
    }
    let mut order = Vec::with_capacity(n);
    let mut depth = vec![0; n];
    let mut parent_line = vec![None; n];
    let mut line_up = vec![0; lines.len()];
    let mut line_down = vec![0; lines.len()];
    let mut child_lines = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &li in &incident[u] {
            let l = &lines[li];
            let other = if index_of[&l.from] == u { index_of[&l.to] } else { index_of[&l.from] };
            if seen[other] {
                continue;
            }
            seen[other] = true;
            depth[other] = depth[u] + 1;
            parent_line[other] = Some(li);
            line_up[li] = u;
            line_down[li] = other;
            child_lines[u].push(li);
            queue.push_back(other);
        }
    }
    Topology { index_of, root, order, depth, parent_line, line_up, line_down, child_lines }
}

/// For every line (by index), the ids of the buses on its far side from the
/// substation, the line's own downstream end included.
pub fn downstream_sets(net: &Network) -> Vec<BTreeSet<BusId>> {
    net.downstream_indices().into_iter().map(|set| set.into_iter().map(|i| net.buses[i].id).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(bus: BusId) -> Source {
        Source { bus, v_sub: 230.0, v_min: 216.2, v_max: 253.0, base_voltage: 230.0 }
    }

    fn chain(n: i64) -> Network {
        let buses = (1..=n).map(Bus::junction).collect();
        let lines = (1..n).map(|i| Line::uniform(i, i + 1, 0.1, 0.1)).collect();
        Network::new(buses, lines, source(1)).unwrap()
    }

    #[test]
    fn two_bus_feeder_is_radial() {
        let net = chain(2);
        assert_eq!(net.bus_count(), 2);
        assert_eq!(net.lines().len(), 1);
        assert!(validate_radial(net.buses(), net.lines(), 1).is_ok());
        let sets = downstream_sets(&net);
        assert_eq!(sets[0].iter().copied().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn chain_downstream_sets_nest() {
        let net = chain(3);
        let sets = downstream_sets(&net);
        assert_eq!(sets[0].iter().copied().collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(sets[1].iter().copied().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn triangle_reports_cycle() {
        let buses: Vec<Bus> = (1..=3).map(Bus::junction).collect();
        let lines = vec![Line::uniform(1, 2, 0.1, 0.1), Line::uniform(2, 3, 0.1, 0.1), Line::uniform(3, 1, 0.1, 0.1)];
        let err = validate_radial(&buses, &lines, 1).unwrap_err();
        let mut cycle = err.cycle.unwrap();
        cycle.sort_unstable();
        assert_eq!(cycle, vec![1, 2, 3]);
        assert!(err.disconnected.is_empty());
    }

    #[test]
    fn four_buses_two_lines_reports_disconnected() {
        let buses: Vec<Bus> = (1..=4).map(Bus::junction).collect();
        let lines = vec![Line::uniform(1, 2, 0.1, 0.1), Line::uniform(3, 4, 0.1, 0.1)];
        let err = validate_radial(&buses, &lines, 1).unwrap_err();
        assert_eq!(err.disconnected, vec![3, 4]);
        assert!(err.cycle.is_none());
    }

    #[test]
    fn reversed_line_is_oriented_from_substation() {
        let buses = (1..=3).map(Bus::junction).collect();
        let lines = vec![Line::uniform(2, 1, 0.1, 0.1), Line::uniform(3, 2, 0.1, 0.1)];
        let net = Network::new(buses, lines, source(1)).unwrap();
        assert_eq!(net.line_ends(0), (0, 1));
        assert_eq!(net.line_ends(1), (1, 2));
        assert_eq!(net.path_lines(2), vec![0, 1]);
    }

    #[test]
    fn construction_errors() {
        let dup = vec![Bus::junction(1), Bus::junction(1)];
        assert_eq!(Network::new(dup, vec![], source(1)).unwrap_err(), NetworkError::DuplicateBus(1));
        let buses = vec![Bus::junction(1), Bus::junction(2)];
        let dangling = vec![Line::uniform(1, 99, 0.1, 0.1)];
        assert!(matches!(
            Network::new(buses.clone(), dangling, source(1)),
            Err(NetworkError::DanglingEndpoint { bus: 99, .. })
        ));
        let zero_r = vec![Line::uniform(1, 2, 0.0, 0.1)];
        assert!(matches!(Network::new(buses.clone(), zero_r, source(1)), Err(NetworkError::BadImpedance { .. })));
        let mut bad = source(1);
        bad.v_min = 240.0;
        assert!(matches!(
            Network::new(buses.clone(), vec![Line::uniform(1, 2, 0.1, 0.1)], bad),
            Err(NetworkError::VoltageWindow { .. })
        ));
        let mut flagged = buses.clone();
        flagged[1].phases = PhaseSet::EMPTY.with(Phase::A);
        flagged[1].load = PhaseSet::EMPTY.with(Phase::B);
        assert!(matches!(
            Network::new(flagged, vec![Line::uniform(1, 2, 0.1, 0.1)], source(1)),
            Err(NetworkError::FlagOnAbsentPhase { bus: 2 })
        ));
    }

    #[test]
    fn infinite_upper_limit_is_accepted() {
        let mut s = source(1);
        s.v_max = f64::INFINITY;
        let buses = vec![Bus::junction(1), Bus::junction(2)];
        assert!(Network::new(buses, vec![Line::uniform(1, 2, 0.1, 0.1)], s).is_ok());
    }

    #[test]
    fn per_unit_conversion() {
        let net = chain(2);
        // 230^2 / 1000 = 52.9 ohm base.
        assert!((net.r_pu()[0].a - 0.1 / 52.9).abs() < 1e-15);
        assert!((net.v_sub_pu() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn phase_set_letters() {
        assert_eq!(PhaseSet::from_letters("CA").unwrap().to_string(), "AC");
        assert_eq!(PhaseSet::from_letters("-").unwrap(), PhaseSet::EMPTY);
        assert!(PhaseSet::from_letters("AA").is_none());
        assert!(PhaseSet::from_letters("AD").is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Random tree: bus k hangs off an earlier bus; ids are shuffled so
        /// the substation is not always the smallest.
        fn tree() -> impl Strategy<Value = (Vec<BusId>, Vec<usize>)> {
            (2usize..24).prop_flat_map(|n| {
                let parents = (1..n).map(|k| 0..k).collect::<Vec<_>>();
                (Just((0..n as BusId).map(|i| 100 + 7 * i).collect::<Vec<_>>()).prop_shuffle(), parents)
            })
        }

        fn reachable(n: usize, edges: &[(usize, usize)], from: usize) -> Vec<bool> {
            let mut seen = vec![false; n];
            seen[from] = true;
            let mut changed = true;
            while changed {
                changed = false;
                for &(u, v) in edges {
                    if seen[u] != seen[v] {
                        seen[u] = true;
                        seen[v] = true;
                        changed = true;
                    }
                }
            }
            seen
        }

        proptest! {
            #[test]
            fn downstream_sizes_sum_to_depths((ids, parents) in tree(), flip in any::<u32>()) {
                let buses: Vec<Bus> = ids.iter().map(|&i| Bus::junction(i)).collect();
                let lines: Vec<Line> = parents.iter().enumerate().map(|(k, &p)| {
                    let (a, b) = (ids[p], ids[k + 1]);
                    if flip >> (k % 32) & 1 == 1 { Line::uniform(b, a, 0.1, 0.1) } else { Line::uniform(a, b, 0.1, 0.1) }
                }).collect();
                let net = Network::new(buses, lines, source(ids[0])).unwrap();
                let sizes: usize = downstream_sets(&net).iter().map(|s| s.len()).sum();
                // Depth by walking parent pointers of the generator, not the network.
                let mut depth = vec![0usize; ids.len()];
                for k in 1..ids.len() {
                    depth[k] = depth[parents[k - 1]] + 1;
                }
                prop_assert_eq!(sizes, depth.iter().sum::<usize>());
                for (k, &id) in ids.iter().enumerate() {
                    prop_assert_eq!(net.depth(net.bus_index(id).unwrap()), depth[k]);
                }
            }

            #[test]
            fn radial_iff_tree_edge_count_and_connected(
                n in 1usize..9,
                raw in proptest::collection::vec((0usize..9, 0usize..9), 0..12),
            ) {
                let edges: Vec<(usize, usize)> = raw.into_iter().map(|(u, v)| (u % n, v % n)).collect();
                let buses: Vec<Bus> = (0..n as BusId).map(Bus::junction).collect();
                let lines: Vec<Line> = edges.iter().map(|&(u, v)| Line::uniform(u as BusId, v as BusId, 0.1, 0.1)).collect();
                let connected = reachable(n, &edges, 0).iter().all(|&s| s);
                let expected = edges.len() + 1 == n && connected;
                prop_assert_eq!(validate_radial(&buses, &lines, 0).is_ok(), expected);
            }
        }
    }
}
