//! Optimization engine used by the fleet planners.
//!
//! Three solvers live here, all self-contained:
//!
//! * [`flow`]: a primal network simplex for integral min-cost flow with
//!   lower/upper arc bounds. Returns node potentials as an optimality
//!   certificate and a balance cut when the network is infeasible.
//! * [`lp`]: a bounded revised simplex over sparse constraint matrices with an
//!   LU-factorized basis and product-form updates.
//! * [`milp`]: best-bound branch-and-bound on top of the LP solver, with
//!   warm-started node relaxations.
//!
//! Problems can be written out in CPLEX LP text format with [`lpfile`] for
//! cross-checking against external solvers.

pub mod flow;
pub mod lp;
pub mod lpfile;
mod lu;
pub mod milp;
mod simplex;
pub mod tol;

use std::time::Duration;

pub use flow::{solve_min_cost_flow, FlowArc, FlowNetwork, FlowResult, InfeasibilityWitness};
pub use lp::{solve_lp, solve_lp_warm, Basis, BasisState, LpOptions, Sense, SparseLinearProgram};
pub use milp::{solve_milp, MilpLimits, MilpProblem};

#[derive(Debug, thiserror::Error)]
pub enum OptError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Termination status shared by every solver in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// A node, iteration or time budget ran out. An assignment is attached
    /// only when an incumbent exists.
    LimitReached,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::LimitReached => "limit-reached",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    /// Simplex pivots (LP and MILP) or network simplex pivots (flow).
    pub iterations: u64,
    /// Branch-and-bound nodes whose relaxation was solved.
    pub nodes: u64,
    pub wall_time: Duration,
    /// Incumbent objective after each improvement, in discovery order.
    pub incumbent_trace: Vec<f64>,
    /// Global lower bound after each processed node.
    pub bound_trace: Vec<f64>,
}

/// Outcome of an LP or MILP solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: Status,
    /// Objective of `values`; `NaN` when there is no assignment.
    pub objective: f64,
    /// Primal assignment for the structural variables.
    pub values: Option<Vec<f64>>,
    /// Best proven lower bound (MILP); equals `objective` for optimal LPs.
    pub lower_bound: f64,
    /// Row duals of the final LP (absent for MILP and non-optimal LPs).
    pub duals: Option<Vec<f64>>,
    pub basis: Option<Basis>,
    pub stats: SolveStats,
}

impl SolveResult {
    pub(crate) fn without_solution(status: Status, stats: SolveStats) -> Self {
        SolveResult {
            status,
            objective: f64::NAN,
            values: None,
            lower_bound: f64::NEG_INFINITY,
            duals: None,
            basis: None,
            stats,
        }
    }

    /// Relative gap between incumbent and bound, `0` when proven optimal.
    pub fn gap(&self) -> f64 {
        if self.values.is_none() {
            return f64::INFINITY;
        }
        let diff = (self.objective - self.lower_bound).max(0.0);
        diff / self.objective.abs().max(1.0)
    }
}
