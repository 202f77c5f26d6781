//! Best-bound branch and bound with warm-started dual simplex children.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::MilpError;
use crate::lp::{lp_solve, Relaxation};
use crate::problem::MilpProblem;
use crate::simplex::{Basis, LpStatus};

const FEAS_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct MilpOptions {
    pub rel_gap: f64,
    pub int_tol: f64,
    pub node_limit: Option<usize>,
    pub time_limit: Option<Duration>,
    /// Record one [`NodeEvent`] per processed node.
    pub log_nodes: bool,
    /// Candidate solution tried before the search; integers are rounded and
    /// the continuous part re-optimised.
    pub start: Option<Vec<f64>>,
    pub branching: Branching,
}

/// Rule for picking the branching variable. Ties go to the more fractional
/// variable, then the lowest index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Branching {
    /// Largest distance to the nearest integer.
    #[default]
    MostFractional,
    /// Pseudocosts, initialised by strong branching on up to `candidates`
    /// variables with fewer than `reliable` observations per direction.
    Reliability { candidates: usize, reliable: u32 },
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            rel_gap: 1e-6,
            int_tol: 1e-6,
            node_limit: None,
            time_limit: None,
            log_nodes: false,
            start: None,
            branching: Branching::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilpStatus {
    Optimal,
    /// A limit stopped the search with an incumbent; see `gap`.
    Feasible,
    Infeasible,
    Unbounded,
    /// A limit stopped the search before any incumbent was found.
    BudgetExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOutcome {
    Branched,
    Incumbent,
    Integral,
    Pruned,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeEvent {
    pub node: usize,
    pub depth: usize,
    pub lp_objective: Option<f64>,
    pub outcome: NodeOutcome,
    pub best_bound: f64,
    pub incumbent: Option<f64>,
    pub open_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub x: Option<Vec<f64>>,
    /// Incumbent objective (`+inf` without one).
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub wall_time: Duration,
    pub log: Vec<NodeEvent>,
}

pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    if !objective.is_finite() {
        return f64::INFINITY;
    }
    ((objective - bound) / objective.abs().max(1.0)).max(0.0)
}

#[derive(Clone, Debug)]
struct Node {
    bound: f64,
    seq: usize,
    depth: usize,
    changes: Vec<(usize, f64, f64)>,
    basis: Option<Rc<Basis>>,
    /// Branching that created this node, for pseudocost updates.
    origin: Option<Origin>,
}

#[derive(Clone, Copy, Debug)]
struct Origin {
    var: usize,
    up: bool,
    parent_obj: f64,
    /// Distance the branching moved the variable.
    dist: f64,
}

/// Per-variable objective gain per unit change, by direction.
#[derive(Clone, Debug, Default)]
struct Pseudocosts {
    sum: [Vec<f64>; 2],
    count: [Vec<u32>; 2],
}

impl Pseudocosts {
    fn new(n: usize) -> Self {
        Pseudocosts {
            sum: [vec![0.0; n], vec![0.0; n]],
            count: [vec![0; n], vec![0; n]],
        }
    }

    fn record(&mut self, var: usize, up: bool, gain: f64) {
        let d = up as usize;
        self.sum[d][var] += gain.max(0.0);
        self.count[d][var] += 1;
    }

    fn reliable(&self, var: usize, threshold: u32) -> bool {
        self.count[0][var] >= threshold && self.count[1][var] >= threshold
    }

    /// Average gain for `var`, falling back to the mean over observed variables.
    fn estimate(&self, var: usize, up: bool) -> f64 {
        let d = up as usize;
        if self.count[d][var] > 0 {
            return self.sum[d][var] / self.count[d][var] as f64;
        }
        let (mut s, mut c) = (0.0, 0u32);
        for j in 0..self.sum[d].len() {
            if self.count[d][j] > 0 {
                s += self.sum[d][j] / self.count[d][j] as f64;
                c += 1;
            }
        }
        if c == 0 {
            1.0
        } else {
            s / c as f64
        }
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: reverse so the lowest bound, then the oldest node, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    p: &'a MilpProblem,
    opts: &'a MilpOptions,
    relax: Relaxation,
    root_lower: Vec<f64>,
    root_upper: Vec<f64>,
    applied: Vec<usize>,
    incumbent: Option<(f64, Vec<f64>)>,
    lp_iterations: usize,
    pseudo: Pseudocosts,
}

/// Branching choice at a node.
enum Choice {
    Integral,
    /// Strong branching proved both children empty or cut off.
    Prune,
    Branch(usize),
}

impl<'a> Search<'a> {
    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((obj, _)) => obj - self.opts.rel_gap * obj.abs().max(1.0),
            None => f64::INFINITY,
        }
    }

    fn incumbent_obj(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|i| i.0)
    }

    /// Restores root bounds and applies `changes`.
    fn apply(&mut self, changes: &[(usize, f64, f64)]) {
        for &j in &self.applied {
            self.relax
                .set_bounds(j, self.root_lower[j], self.root_upper[j]);
        }
        self.applied.clear();
        for &(j, lo, hi) in changes {
            self.relax.set_bounds(j, lo, hi);
            self.applied.push(j);
        }
    }

    fn solve_lp(&mut self) -> Result<LpStatus, MilpError> {
        let before = self.relax.iterations();
        let result = self.relax.solve();
        self.lp_iterations += self.relax.iterations().saturating_sub(before);
        match result {
            Ok(st) => Ok(st),
            Err(e) => {
                // Retry from a fresh slack basis before giving up.
                log::warn!("node LP failed ({e}); retrying from scratch");
                let mut lower = self.root_lower.clone();
                let mut upper = self.root_upper.clone();
                for &j in &self.applied {
                    let (lo, hi) = self.relax.bounds(j);
                    lower[j] = lo;
                    upper[j] = hi;
                }
                let mut fresh = Relaxation::new(self.p, &self.root_lower, &self.root_upper);
                for &j in &self.applied {
                    fresh.set_bounds(j, lower[j], upper[j]);
                }
                self.relax = fresh;
                let st = self.relax.solve()?;
                self.lp_iterations += self.relax.iterations();
                Ok(st)
            }
        }
    }

    /// Objective of the relaxation with `j` restricted to `[lo, hi]`, or
    /// `None` when infeasible; the node state is restored afterwards.
    fn probe(
        &mut self,
        j: usize,
        lo: f64,
        hi: f64,
        basis: &Basis,
    ) -> Result<Option<f64>, MilpError> {
        let (old_lo, old_hi) = self.relax.bounds(j);
        self.relax.set_bounds(j, lo, hi);
        let before = self.relax.iterations();
        let result = self.relax.solve();
        self.lp_iterations += self.relax.iterations().saturating_sub(before);
        let value = match result {
            Ok(LpStatus::Optimal) => Ok(Some(self.relax.objective())),
            Ok(_) => Ok(None),
            Err(e) => Err(e),
        };
        self.relax.set_bounds(j, old_lo, old_hi);
        self.relax.load_basis(basis);
        value
    }

    /// Pseudocost branching; variables without reliable pseudocosts are
    /// scored by solving both children. Ties go to the lowest index.
    fn choose(&mut self, x: &[f64], obj: f64) -> Result<Choice, MilpError> {
        let mut fractional: Vec<(usize, f64)> = (0..self.p.num_vars())
            .filter(|&j| self.p.integer[j])
            .map(|j| (j, (x[j] - x[j].floor()).min(x[j].ceil() - x[j])))
            .filter(|&(_, f)| f > self.opts.int_tol)
            .collect();
        if fractional.is_empty() {
            return Ok(Choice::Integral);
        }
        fractional.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let (candidates, reliable) = match self.opts.branching {
            Branching::MostFractional => return Ok(Choice::Branch(fractional[0].0)),
            Branching::Reliability {
                candidates,
                reliable,
            } => (candidates, reliable),
        };
        let unreliable: Vec<(usize, f64)> = fractional
            .iter()
            .copied()
            .filter(|&(j, _)| !self.pseudo.reliable(j, reliable))
            .take(candidates)
            .collect();
        let eps = 1e-6 * obj.abs().max(1.0);
        let score = |down: f64, up: f64| down.max(eps) * up.max(eps);
        let frac_of = |j: usize| (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
        // Higher score, then more fractional, then lower index.
        let mut best: Option<(f64, f64, usize)> = None;
        let consider = |score: f64, j: usize, best: &mut Option<(f64, f64, usize)>| {
            let f = frac_of(j);
            let better = best.is_none_or(|(s, bf, b)| {
                score > s || (score == s && (f > bf || (f == bf && j < b)))
            });
            if better {
                *best = Some((score, f, j));
            }
        };
        if !unreliable.is_empty() {
            let basis = self.relax.basis();
            let cutoff = self.cutoff();
            for &(j, _) in &unreliable {
                let (lo, hi) = self.relax.bounds(j);
                let (fl, cl) = (x[j].floor(), x[j].ceil());
                let down = match self.probe(j, lo, fl, &basis) {
                    Ok(v) => v,
                    Err(e) => {
                        log::debug!("strong branching on {j} failed: {e}");
                        continue;
                    }
                };
                let up = match self.probe(j, cl, hi, &basis) {
                    Ok(v) => v,
                    Err(e) => {
                        log::debug!("strong branching on {j} failed: {e}");
                        continue;
                    }
                };
                let dead = |v: Option<f64>| v.is_none_or(|o| o >= cutoff);
                if dead(down) && dead(up) {
                    return Ok(Choice::Prune);
                }
                if let Some(o) = down {
                    self.pseudo.record(j, false, (o - obj) / (x[j] - fl));
                }
                if let Some(o) = up {
                    self.pseudo.record(j, true, (o - obj) / (cl - x[j]));
                }
                // An empty child makes the variable a perfect choice.
                let s = if dead(down) || dead(up) {
                    f64::INFINITY
                } else {
                    score(down.unwrap() - obj, up.unwrap() - obj)
                };
                consider(s, j, &mut best);
            }
        }
        fractional.retain(|&(j, _)| !unreliable.iter().any(|&(k, _)| k == j));
        for (j, _) in fractional {
            let down = self.pseudo.estimate(j, false) * (x[j] - x[j].floor());
            let up = self.pseudo.estimate(j, true) * (x[j].ceil() - x[j]);
            consider(score(down, up), j, &mut best);
        }
        Ok(match best {
            Some((_, _, j)) => Choice::Branch(j),
            // Every strong-branching probe failed; fall back to the first candidate.
            None => Choice::Branch(unreliable[0].0),
        })
    }

    /// Fixes integers at their rounded values, re-solves the continuous part
    /// and installs the result as incumbent when it improves.
    fn try_incumbent(&mut self, x: &[f64]) -> Result<bool, MilpError> {
        let mut fixed = self.p.clone();
        for j in 0..self.p.num_vars() {
            if self.p.integer[j] {
                let v = x[j].round().clamp(self.p.lower[j], self.p.upper[j]);
                fixed.fix(j, v);
            }
        }
        let sol = lp_solve(&fixed, None)?;
        self.lp_iterations += sol.iterations;
        if sol.status != LpStatus::Optimal {
            return Ok(false);
        }
        let mut xs = sol.x;
        for j in 0..self.p.num_vars() {
            if self.p.integer[j] {
                xs[j] = xs[j].round();
            }
        }
        if self.p.max_violation(&xs) > FEAS_TOL {
            log::debug!(
                "rounded candidate rejected, violation {:e}",
                self.p.max_violation(&xs)
            );
            return Ok(false);
        }
        let obj = self.p.objective_value(&xs);
        let better = self
            .incumbent
            .as_ref()
            .is_none_or(|(o, _)| obj < *o - 1e-12);
        if better {
            self.incumbent = Some((obj, xs));
        }
        Ok(better)
    }
}

/// Solves `p` by branch and bound. Deterministic for identical input.
pub fn solve(p: &MilpProblem, opts: &MilpOptions) -> Result<MilpSolution, MilpError> {
    p.validate()?;
    let started = Instant::now();
    let mut search = Search {
        p,
        opts,
        relax: Relaxation::new(p, &p.lower, &p.upper),
        root_lower: p.lower.clone(),
        root_upper: p.upper.clone(),
        applied: Vec::new(),
        incumbent: None,
        lp_iterations: 0,
        pseudo: Pseudocosts::new(p.num_vars()),
    };
    if let Some(start) = &opts.start {
        if start.len() == p.num_vars() && search.try_incumbent(start)? {
            log::debug!(
                "start accepted with objective {}",
                search.incumbent_obj().unwrap()
            );
        }
    }

    let mut heap = BinaryHeap::new();
    let mut log = Vec::new();
    let mut seq = 0usize;
    let mut nodes = 0usize;
    let mut best_bound = f64::NEG_INFINITY;
    let mut limit_hit = false;
    let mut unbounded = false;
    let mut next = Some(Node {
        bound: f64::NEG_INFINITY,
        seq,
        depth: 0,
        changes: Vec::new(),
        basis: None,
        origin: None,
    });
    // Smallest bound among nodes dropped after LP failures.
    let mut lost_bound = f64::INFINITY;
    // Whether `relax` currently holds the parent's solved state, so a dive
    // child only needs its one extra bound change.
    let mut warm = false;
    // A MIP start does not end the opening dive; reaching an integral node does.
    let mut diving = true;

    loop {
        let node = match next.take() {
            Some(n) => n,
            None => match heap.pop() {
                Some(n) => {
                    warm = false;
                    n
                }
                None => break,
            },
        };
        if node.bound >= search.cutoff() {
            continue;
        }
        let open_bound = heap
            .peek()
            .map_or(f64::INFINITY, |n: &Node| n.bound)
            .min(lost_bound);
        best_bound = best_bound.max(node.bound.min(open_bound));
        if let Some(inc) = search.incumbent_obj() {
            if relative_gap(inc, best_bound) <= opts.rel_gap {
                heap.push(node);
                break;
            }
        }
        if opts.node_limit.is_some_and(|l| nodes >= l)
            || opts.time_limit.is_some_and(|t| started.elapsed() >= t)
        {
            limit_hit = true;
            heap.push(node);
            break;
        }
        nodes += 1;

        if warm {
            let &(j, lo, hi) = node.changes.last().expect("dive child carries a change");
            search.relax.set_bounds(j, lo, hi);
            search.applied.push(j);
        } else {
            search.apply(&node.changes);
            if let Some(b) = &node.basis {
                search.relax.load_basis(b);
            }
        }
        let status = match search.solve_lp() {
            Ok(st) => st,
            Err(e) => {
                log::warn!("dropping node {nodes} after LP failure: {e}");
                lost_bound = lost_bound.min(node.bound);
                warm = false;
                continue;
            }
        };
        warm = false;

        let mut event = NodeEvent {
            node: nodes,
            depth: node.depth,
            lp_objective: None,
            outcome: NodeOutcome::Infeasible,
            best_bound,
            incumbent: search.incumbent_obj(),
            open_nodes: heap.len(),
        };
        match status {
            LpStatus::Infeasible => {}
            LpStatus::Unbounded => {
                if node.depth == 0 {
                    unbounded = true;
                    break;
                }
                return Err(MilpError::NumericalBreakdown {
                    iterations: search.lp_iterations,
                    detail: "unbounded node below a bounded root".into(),
                });
            }
            LpStatus::Optimal => {
                let obj = search.relax.objective();
                event.lp_objective = Some(obj);
                if let Some(o) = node.origin {
                    search
                        .pseudo
                        .record(o.var, o.up, (obj - o.parent_obj) / o.dist);
                }
                let x = search.relax.values();
                // Strong-branching probes leave the node's bounds and basis in place.
                let choice = if obj >= search.cutoff() {
                    Choice::Prune
                } else {
                    search.choose(&x, obj)?
                };
                if let Choice::Prune = choice {
                    event.outcome = NodeOutcome::Pruned;
                } else {
                    match choice {
                        Choice::Prune => unreachable!(),
                        Choice::Integral => {
                            diving = false;
                            event.outcome = if search.try_incumbent(&x)? {
                                NodeOutcome::Incumbent
                            } else {
                                NodeOutcome::Integral
                            };
                        }
                        Choice::Branch(j) => {
                            event.outcome = NodeOutcome::Branched;
                            let (lo, hi) = search.relax.bounds(j);
                            let basis = Rc::new(search.relax.basis());
                            let child = |seq: usize, lo: f64, hi: f64, up: bool| {
                                let mut changes = node.changes.clone();
                                changes.push((j, lo, hi));
                                let dist = if up {
                                    x[j].ceil() - x[j]
                                } else {
                                    x[j] - x[j].floor()
                                };
                                Node {
                                    bound: obj,
                                    seq,
                                    depth: node.depth + 1,
                                    changes,
                                    basis: Some(basis.clone()),
                                    origin: Some(Origin {
                                        var: j,
                                        up,
                                        parent_obj: obj,
                                        dist,
                                    }),
                                }
                            };
                            let down = child(seq + 1, lo, x[j].floor(), false);
                            let up = child(seq + 2, x[j].ceil(), hi, true);
                            seq += 2;
                            if diving {
                                // Dive towards the nearer integer.
                                let (first, second) = if x[j] - x[j].floor() >= 0.5 {
                                    (up, down)
                                } else {
                                    (down, up)
                                };
                                heap.push(second);
                                next = Some(first);
                                warm = true;
                            } else {
                                heap.push(down);
                                heap.push(up);
                            }
                        }
                    }
                }
            }
        }
        event.incumbent = search.incumbent_obj();
        event.open_nodes = heap.len();
        if opts.log_nodes {
            log.push(event);
        }
    }

    let lp_iterations = search.lp_iterations;
    let wall_time = started.elapsed();
    if unbounded {
        return Ok(MilpSolution {
            status: MilpStatus::Unbounded,
            x: None,
            objective: f64::NEG_INFINITY,
            bound: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            nodes,
            lp_iterations,
            wall_time,
            log,
        });
    }
    let open_bound = heap
        .iter()
        .map(|n| n.bound)
        .fold(f64::INFINITY, f64::min)
        .min(lost_bound);
    limit_hit |= lost_bound.is_finite();
    let (status, x, objective, bound) = match search.incumbent {
        Some((obj, x)) => {
            let bound = open_bound.max(best_bound).min(obj);
            let status = if limit_hit && relative_gap(obj, bound) > opts.rel_gap {
                MilpStatus::Feasible
            } else {
                MilpStatus::Optimal
            };
            (status, Some(x), obj, bound)
        }
        None if limit_hit => (
            MilpStatus::BudgetExhausted,
            None,
            f64::INFINITY,
            open_bound.max(best_bound),
        ),
        None => (MilpStatus::Infeasible, None, f64::INFINITY, f64::INFINITY),
    };
    Ok(MilpSolution {
        status,
        x,
        objective,
        bound,
        gap: relative_gap(objective, bound),
        nodes,
        lp_iterations,
        wall_time,
        log,
    })
}
