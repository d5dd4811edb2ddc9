use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::model::{build, decode, Model};
use super::{BinaryState, EssCount, Placement, SizingError, SizingProblem, SizingSolution, SolverStats};
use crate::netmodel::BusId;
use crate::qpsolve::{solve_qp, QpProblem, QpSolution, QpStatus};

/// Largest number of assignments [`enumerate_oracle`] will solve.
pub const ENUMERATION_LIMIT: usize = 10_000;
/// Nodes whose bound exceeds the incumbent by more than this are pruned.
const PRUNE_REL: f64 = 1e-5;
/// Leaves within this of the best are ties, resolved by bus id.
const TIE_REL: f64 = 1e-7;

struct Leaf {
    value: f64,
    placements: Vec<Placement>,
}

struct Search<'a> {
    prob: &'a SizingProblem,
    model: Model,
    leaves: BTreeMap<Vec<bool>, Option<Leaf>>,
    stats: SolverStats,
}

struct Node {
    bound: f64,
    seq: usize,
    states: Vec<BinaryState>,
    b: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // max-heap: lowest bound first, then earliest created
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then(o.seq.cmp(&self.seq))
    }
}

fn trivial_solution(qp: &QpProblem) -> QpSolution {
    QpSolution {
        x: Vec::new(),
        y: Vec::new(),
        status: QpStatus::Optimal,
        primal_residual: 0.0,
        dual_residual: 0.0,
        objective_value: qp.constant,
        iterations: 0,
        polished: false,
    }
}

impl<'a> Search<'a> {
    fn new(prob: &'a SizingProblem) -> Result<Self, SizingError> {
        Ok(Search { prob, model: Model::new(prob)?, leaves: BTreeMap::new(), stats: SolverStats::default() })
    }

    /// Builds and solves; `None` when the assignment admits no feasible point.
    fn run(&mut self, states: &[BinaryState]) -> Result<Option<(QpSolution, super::model::Layout)>, SizingError> {
        let (qp, layout) = match build(&self.model, self.prob, states) {
            Ok(v) => v,
            Err(SizingError::VoltageInfeasible { .. } | SizingError::Infeasible) => return Ok(None),
            Err(e) => return Err(e),
        };
        let sol = if qp.n() == 0 { trivial_solution(&qp) } else { solve_qp(&qp, &self.prob.qp)? };
        self.stats.qp_solves += 1;
        self.stats.qp_iterations += sol.iterations;
        match sol.status {
            QpStatus::Optimal => Ok(Some((sol, layout))),
            QpStatus::Infeasible => Ok(None),
            QpStatus::MaxIter => Err(SizingError::MaxIter),
        }
    }

    fn relaxed(&mut self, states: &[BinaryState]) -> Result<Option<(f64, Vec<f64>)>, SizingError> {
        let Some((sol, layout)) = self.run(states)? else { return Ok(None) };
        let mut b: Vec<f64> = states
            .iter()
            .map(|s| match s {
                BinaryState::Fixed(true) => 1.0,
                _ => 0.0,
            })
            .collect();
        for u in &layout.units {
            if let Some(bi) = u.b {
                b[u.cand] = sol.x[bi].clamp(0.0, 1.0);
            }
        }
        Ok(Some((sol.objective_value, b)))
    }

    /// Value of a fully fixed assignment, solved once.
    fn leaf(&mut self, ones: &[bool]) -> Result<Option<f64>, SizingError> {
        if let Some(l) = self.leaves.get(ones) {
            return Ok(l.as_ref().map(|l| l.value));
        }
        let states: Vec<BinaryState> = ones.iter().map(|&o| BinaryState::Fixed(o)).collect();
        let leaf = match self.run(&states)? {
            Some((sol, layout)) => {
                let placements = decode(&self.model, self.prob, &layout, &sol.x)?;
                Some(Leaf { value: sol.objective_value, placements })
            }
            None => None,
        };
        let v = leaf.as_ref().map(|l| l.value);
        self.leaves.insert(ones.to_vec(), leaf);
        Ok(v)
    }

    fn bus_ids(&self, ones: &[bool]) -> Vec<BusId> {
        let mut ids: Vec<BusId> =
            ones.iter().zip(&self.prob.candidates).filter(|(o, _)| **o).map(|(_, &b)| b).collect();
        ids.sort_unstable();
        ids
    }

    /// Best evaluated leaf; near-ties go to the lexicographically lowest
    /// sorted bus-id list.
    fn best_key(&self) -> Option<Vec<bool>> {
        let best = self.leaves.values().flatten().map(|l| l.value).min_by(|a, b| a.total_cmp(b))?;
        let tol = TIE_REL * best.abs().max(1e-12);
        self.leaves
            .iter()
            .filter_map(|(k, l)| l.as_ref().filter(|l| l.value <= best + tol).map(|_| k))
            .min_by(|a, b| self.bus_ids(a).cmp(&self.bus_ids(b)))
            .cloned()
    }

    fn incumbent(&self) -> Option<f64> {
        self.leaves.values().flatten().map(|l| l.value).min_by(|a, b| a.total_cmp(b))
    }

    fn finish(mut self, lower: f64) -> Result<SizingSolution, SizingError> {
        let key = self.best_key().ok_or(SizingError::Infeasible)?;
        let leaf = self.leaves.remove(&key).flatten().expect("best leaf exists");
        let best = leaf.value;
        let lower = lower.min(best);
        let gap = if best.abs() > 1e-12 { ((best - lower) / best.abs()).max(0.0) } else { 0.0 };
        self.stats.best_bound = lower;
        let objective_kwh = self.model.annual_loss(self.prob, &leaf.placements);
        Ok(SizingSolution {
            placements: leaf.placements,
            objective_kwh,
            qp_objective: best,
            capacity_bound_kwh: self.model.bound,
            stats: self.stats,
            optimality_gap: gap,
        })
    }
}

fn target_units(prob: &SizingProblem) -> Option<usize> {
    match prob.n_ess {
        EssCount::Fixed(n) => Some(n),
        EssCount::Free => None,
    }
}

/// Installs the `n` relaxed candidates with the largest relaxation values
/// (ties to the lower bus id); rounds at one half without a count.
fn round(prob: &SizingProblem, states: &[BinaryState], b: &[f64]) -> Vec<bool> {
    let mut ones: Vec<bool> = states.iter().map(|s| *s == BinaryState::Fixed(true)).collect();
    match target_units(prob) {
        Some(n) => {
            let mut free: Vec<usize> = (0..states.len()).filter(|&j| states[j] == BinaryState::Relaxed).collect();
            free.sort_by(|&x, &y| b[y].total_cmp(&b[x]).then(prob.candidates[x].cmp(&prob.candidates[y])));
            let have = ones.iter().filter(|o| **o).count();
            for &j in free.iter().take(n.saturating_sub(have)) {
                ones[j] = true;
            }
        }
        None => {
            for j in 0..states.len() {
                if states[j] == BinaryState::Relaxed {
                    ones[j] = b[j] >= 0.5;
                }
            }
        }
    }
    ones
}

/// Completes an assignment whose count constraint leaves no freedom.
fn forced(prob: &SizingProblem, states: &[BinaryState]) -> Option<Vec<bool>> {
    let ones = states.iter().filter(|s| **s == BinaryState::Fixed(true)).count();
    let relaxed = states.iter().filter(|s| **s == BinaryState::Relaxed).count();
    let fill = match target_units(prob) {
        _ if relaxed == 0 => false,
        Some(n) if ones == n => false,
        Some(n) if ones + relaxed == n => true,
        _ => return None,
    };
    Some(states.iter().map(|s| if let BinaryState::Fixed(v) = s { *v } else { fill }).collect())
}

fn count_ok(prob: &SizingProblem, states: &[BinaryState]) -> bool {
    let ones = states.iter().filter(|s| **s == BinaryState::Fixed(true)).count();
    let relaxed = states.iter().filter(|s| **s == BinaryState::Relaxed).count();
    match target_units(prob) {
        Some(n) => ones <= n && ones + relaxed >= n,
        None => true,
    }
}

fn branch_and_bound(prob: &SizingProblem) -> Result<SizingSolution, SizingError> {
    let mut s = Search::new(prob)?;
    let k = s.model.k();
    let root = vec![BinaryState::Relaxed; k];
    if let Some(ones) = forced(prob, &root) {
        s.stats.nodes = 1;
        s.leaf(&ones)?;
        let v = s.incumbent().ok_or(SizingError::Infeasible)?;
        return s.finish(v);
    }
    let Some((bound, b)) = s.relaxed(&root)? else { return Err(SizingError::Infeasible) };
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node { bound, seq, states: root, b });
    let mut open_bound = None;

    while let Some(node) = heap.pop() {
        if let Some(best) = s.incumbent() {
            if node.bound > best + PRUNE_REL * best.abs() {
                break;
            }
        }
        if s.stats.nodes >= prob.node_limit {
            open_bound = Some(node.bound);
            break;
        }
        s.stats.nodes += 1;

        let guess = round(prob, &node.states, &node.b);
        s.leaf(&guess)?;

        let branch = (0..k).filter(|&j| node.states[j] == BinaryState::Relaxed).min_by(|&x, &y| {
            let fx = node.b[x].min(1.0 - node.b[x]);
            let fy = node.b[y].min(1.0 - node.b[y]);
            fy.total_cmp(&fx).then(prob.candidates[x].cmp(&prob.candidates[y]))
        });
        let Some(j) = branch else { continue };
        for val in [true, false] {
            let mut child = node.states.clone();
            child[j] = BinaryState::Fixed(val);
            if !count_ok(prob, &child) {
                continue;
            }
            if let Some(ones) = forced(prob, &child) {
                s.leaf(&ones)?;
                continue;
            }
            if let Some((bound, b)) = s.relaxed(&child)? {
                let keep = s.incumbent().is_none_or(|best| bound <= best + PRUNE_REL * best.abs());
                if keep {
                    seq += 1;
                    heap.push(Node { bound: bound.max(node.bound), seq, states: child, b });
                }
            }
        }
    }
    // nodes left after a prune cannot beat the incumbent beyond tolerance
    let lower = match open_bound {
        Some(b) => heap.iter().map(|n| n.bound).fold(b, f64::min),
        None => f64::INFINITY,
    };
    s.finish(lower)
}

/// Replaces an unset capacity bound with twice the single-unit optimum.
fn resolve_bound(prob: &SizingProblem) -> Result<(SizingProblem, Option<f64>), SizingError> {
    if prob.capacity_bound.is_some() {
        return Ok((prob.clone(), None));
    }
    let mut single = prob.clone();
    single.aggregate_cap = None;
    let has_units = !prob.candidates.is_empty() && prob.n_ess != EssCount::Fixed(0);
    if has_units {
        single.n_ess = EssCount::Fixed(1);
    }
    let model = Model::new(&single)?;
    let energy = model.bound;
    let m = if has_units {
        single.capacity_bound = Some(energy);
        let cap = branch_and_bound(&single)?.total_capacity();
        if cap > 1e-6 {
            2.0 * cap
        } else {
            energy
        }
    } else {
        energy
    };
    let mut out = prob.clone();
    out.capacity_bound = Some(m.max(prob.aggregate_cap.unwrap_or(0.0)));
    Ok((out, Some(m)))
}

/// Per-unit capacity bound the solver would use for `prob`.
pub fn capacity_bound(prob: &SizingProblem) -> Result<f64, SizingError> {
    prob.validate()?;
    let (resolved, _) = resolve_bound(prob)?;
    Ok(resolved.capacity_bound.expect("bound resolved"))
}

fn note_bound(sol: &mut SizingSolution, derived: Option<f64>) {
    if let Some(m) = derived {
        sol.stats.notes.push(format!("capacity bound {m} kWh derived from the single-unit optimum"));
    }
}

/// Best-first branch-and-bound over installation binaries, each node a
/// convex QP with the undecided binaries relaxed to `[0, 1]`.
pub fn solve_miqp(prob: &SizingProblem) -> Result<SizingSolution, SizingError> {
    let (resolved, derived) = resolve_bound(prob)?;
    let mut sol = branch_and_bound(&resolved)?;
    note_bound(&mut sol, derived);
    Ok(sol)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Solves every admissible assignment and returns the best, with the same
/// tie-breaking as [`solve_miqp`].
pub fn enumerate_oracle(prob: &SizingProblem) -> Result<SizingSolution, SizingError> {
    let k = prob.candidates.len();
    let combos = match prob.n_ess {
        EssCount::Fixed(n) if n <= k => binomial(k, n),
        EssCount::Fixed(_) => 0,
        EssCount::Free => 1u128.checked_shl(k as u32).unwrap_or(u128::MAX),
    };
    if combos > ENUMERATION_LIMIT as u128 {
        return Err(SizingError::BudgetExceeded { combinations: combos, limit: ENUMERATION_LIMIT });
    }
    let (resolved, derived) = resolve_bound(prob)?;
    let mut s = Search::new(&resolved)?;
    let sizes: Vec<usize> = match resolved.n_ess {
        EssCount::Fixed(n) => vec![n],
        EssCount::Free => (0..=k).collect(),
    };
    for n in sizes {
        // index combinations in lexicographic order
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let mut ones = vec![false; k];
            idx.iter().for_each(|&j| ones[j] = true);
            s.stats.nodes += 1;
            s.leaf(&ones)?;
            let Some(p) = (0..n).rev().find(|&p| idx[p] < k - n + p) else { break };
            idx[p] += 1;
            for q in p + 1..n {
                idx[q] = idx[q - 1] + 1;
            }
        }
    }
    let mut sol = s.finish(f64::INFINITY)?;
    note_bound(&mut sol, derived);
    Ok(sol)
}
