//! Best-bound branch-and-bound over the simplex relaxation.
//!
//! Branching picks the most fractional integer variable (lowest index on
//! ties). Children inherit the parent's optimal basis, so each node re-solve
//! starts from a basis that is at most one bound away from feasible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use crate::lp::{outcome_to_result, Basis, LpOptions, SparseLinearProgram};
use crate::simplex::SimplexSolver;
use crate::{tol, OptError, SolveResult, SolveStats, Status};

#[derive(Debug, Clone, Default)]
pub struct MilpProblem {
    pub lp: SparseLinearProgram,
    /// Indices of the variables restricted to integer values.
    pub integers: Vec<usize>,
    /// Optional starting basis for the root relaxation.
    pub start: Option<Basis>,
}

impl MilpProblem {
    pub fn new(lp: SparseLinearProgram, integers: Vec<usize>) -> Self {
        MilpProblem { lp, integers, start: None }
    }

    /// Every column integral.
    pub fn all_integer(lp: SparseLinearProgram) -> Self {
        let integers = (0..lp.num_vars()).collect();
        MilpProblem { lp, integers, start: None }
    }

    pub fn validate(&self) -> Result<(), OptError> {
        self.lp.validate()?;
        if let Some(&j) = self.integers.iter().find(|&&j| j >= self.lp.num_vars()) {
            return Err(OptError::Malformed(format!(
                "integer index {j} outside {} columns",
                self.lp.num_vars()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MilpLimits {
    pub max_nodes: u64,
    pub time_limit: Duration,
}

impl Default for MilpLimits {
    fn default() -> Self {
        MilpLimits {
            max_nodes: 100_000,
            time_limit: Duration::from_secs(120),
        }
    }
}

struct Node {
    bound: f64,
    depth: u32,
    seq: u64,
    changes: Rc<BoundChanges>,
    basis: Option<Rc<Basis>>,
}

/// Persistent list of bound changes from the root.
struct BoundChanges {
    var: usize,
    lo: f64,
    hi: f64,
    parent: Option<Rc<BoundChanges>>,
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
    // Max-heap: smallest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

pub fn solve_milp(problem: &MilpProblem, limits: MilpLimits) -> Result<SolveResult, OptError> {
    problem.validate()?;
    if limits.max_nodes == 0 || limits.time_limit.is_zero() {
        return Err(OptError::Malformed("branch-and-bound budgets must be positive".into()));
    }
    let started = Instant::now();
    let lp = &problem.lp;
    let lp_options = LpOptions {
        time_limit: Some(limits.time_limit),
        ..LpOptions::default()
    };

    if problem.integers.is_empty() {
        let mut solver = SimplexSolver::new(lp);
        let outcome = solver.solve(&lp.col_lower, &lp.col_upper, problem.start.as_ref(), &lp_options, started)?;
        let mut result = outcome_to_result(lp, outcome, started);
        result.stats.nodes = 1;
        if result.status == Status::Optimal {
            result.stats.incumbent_trace.push(result.objective);
            result.stats.bound_trace.push(result.objective);
        }
        return Ok(result);
    }

    let mut is_int = vec![false; lp.num_vars()];
    for &j in &problem.integers {
        is_int[j] = true;
    }
    let mut root_lo = lp.col_lower.clone();
    let mut root_hi = lp.col_upper.clone();
    for j in 0..lp.num_vars() {
        if is_int[j] {
            root_lo[j] = (root_lo[j] - tol::INTEGRALITY).ceil();
            root_hi[j] = (root_hi[j] + tol::INTEGRALITY).floor();
        }
    }

    // With integer costs on integer columns only, every feasible objective is
    // an integer, so relaxation bounds can be rounded up.
    let integral_objective = lp
        .objective
        .iter()
        .enumerate()
        .all(|(j, &c)| c == 0.0 || (is_int[j] && (c - c.round()).abs() <= 1e-9));

    let mut solver = SimplexSolver::new(lp);
    let mut stats = SolveStats::default();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq,
        changes: Rc::new(BoundChanges {
            var: usize::MAX,
            lo: 0.0,
            hi: 0.0,
            parent: None,
        }),
        basis: problem.start.clone().map(Rc::new),
    });

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut lower_bound = f64::NEG_INFINITY;
    let mut lo = root_lo.clone();
    let mut hi = root_hi.clone();
    let mut hit_limit = false;
    let mut unbounded = false;

    let mut plunge: Option<Node> = None;
    while let Some(node) = plunge.take().or_else(|| heap.pop()) {
        if let Some((inc, _)) = &incumbent {
            if node.bound >= inc - tol::MIP_GAP * inc.abs().max(1.0) {
                continue;
            }
        }
        if stats.nodes >= limits.max_nodes || started.elapsed() >= limits.time_limit {
            heap.push(node);
            hit_limit = true;
            break;
        }
        stats.nodes += 1;

        lo.copy_from_slice(&root_lo);
        hi.copy_from_slice(&root_hi);
        let mut link = Some(&node.changes);
        let mut applied: Vec<(usize, f64, f64)> = Vec::new();
        while let Some(c) = link {
            if c.var != usize::MAX {
                applied.push((c.var, c.lo, c.hi));
            }
            link = c.parent.as_ref();
        }
        // Apply root-to-leaf so deeper changes win.
        for &(j, l, h) in applied.iter().rev() {
            lo[j] = l;
            hi[j] = h;
        }

        let outcome = solver.solve(&lo, &hi, node.basis.as_deref(), &lp_options, started)?;
        stats.iterations += outcome.iterations;
        match outcome.status {
            Status::Infeasible => {}
            Status::Unbounded => {
                unbounded = true;
                break;
            }
            Status::LimitReached => {
                heap.push(node);
                hit_limit = true;
                break;
            }
            Status::Optimal => {
                let mut obj = lp.evaluate(&outcome.values).max(node.bound);
                if integral_objective {
                    obj = (obj - 1e-6 * obj.abs().max(1.0)).ceil();
                }
                let pruned = incumbent
                    .as_ref()
                    .is_some_and(|(inc, _)| obj >= inc - tol::MIP_GAP * inc.abs().max(1.0));
                if !pruned {
                    match most_fractional(&outcome.values, &is_int) {
                        None => {
                            let mut x = outcome.values;
                            for (j, v) in x.iter_mut().enumerate() {
                                if is_int[j] {
                                    *v = v.round();
                                }
                            }
                            let value = lp.evaluate(&x);
                            if incumbent.as_ref().is_none_or(|(inc, _)| value < *inc) {
                                stats.incumbent_trace.push(value);
                                incumbent = Some((value, x));
                            }
                        }
                        Some(j) => {
                            let v = outcome.values[j];
                            let basis = Rc::new(outcome.basis);
                            let mut children = [(lo[j], v.floor()), (v.ceil(), hi[j])].map(|(l, h)| {
                                seq += 1;
                                Node {
                                    bound: obj,
                                    depth: node.depth + 1,
                                    seq,
                                    changes: Rc::new(BoundChanges {
                                        var: j,
                                        lo: l,
                                        hi: h,
                                        parent: Some(Rc::clone(&node.changes)),
                                    }),
                                    basis: Some(Rc::clone(&basis)),
                                }
                            });
                            // Dive towards the nearer integer; the sibling waits in the queue.
                            if v - v.floor() > 0.5 {
                                children.swap(0, 1);
                            }
                            let [near, far] = children;
                            heap.push(far);
                            plunge = Some(near);
                        }
                    }
                }
            }
        }
        let open_min = heap
            .peek()
            .map_or(f64::INFINITY, |n| n.bound)
            .min(plunge.as_ref().map_or(f64::INFINITY, |n| n.bound));
        let inc_val = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        lower_bound = lower_bound.max(open_min.min(inc_val));
        stats.bound_trace.push(lower_bound);
    }
    stats.wall_time = started.elapsed();

    if unbounded {
        return Ok(SolveResult::without_solution(Status::Unbounded, stats));
    }
    let status = match (&incumbent, hit_limit) {
        (_, true) => Status::LimitReached,
        (Some(_), false) => Status::Optimal,
        (None, false) => Status::Infeasible,
    };
    match incumbent {
        Some((objective, values)) => {
            let lower_bound = if status == Status::Optimal {
                objective
            } else {
                let open_min = heap.peek().map_or(f64::INFINITY, |n| n.bound);
                lower_bound.max(open_min.min(objective))
            };
            Ok(SolveResult {
                status,
                objective,
                values: Some(values),
                lower_bound,
                duals: None,
                basis: None,
                stats,
            })
        }
        None => {
            let mut r = SolveResult::without_solution(status, stats);
            r.lower_bound = lower_bound;
            Ok(r)
        }
    }
}

fn most_fractional(x: &[f64], is_int: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in x.iter().enumerate() {
        if !is_int[j] {
            continue;
        }
        let frac = v - v.floor();
        let dist = frac.min(1.0 - frac);
        if dist <= tol::INTEGRALITY {
            continue;
        }
        if best.is_none_or(|(_, d)| dist > d) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}
