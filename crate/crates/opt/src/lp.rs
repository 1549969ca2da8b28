//! Sparse linear programs and the public LP entry points.

use std::time::Duration;

use crate::simplex::{SimplexOutcome, SimplexSolver};
use crate::{OptError, SolveResult, SolveStats, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub sense: Sense,
    pub rhs: f64,
}

/// `minimize c'x  s.t.  rows (=, <=, >=),  lower <= x <= upper`.
///
/// The constraint matrix is kept as `(row, col, value)` triplets. Duplicate
/// triplets are summed when the problem is handed to a solver.
#[derive(Debug, Clone, Default)]
pub struct SparseLinearProgram {
    pub objective: Vec<f64>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    pub rows: Vec<Row>,
    pub triplets: Vec<(usize, usize, f64)>,
    /// Optional column names used by the LP text writer.
    pub col_names: Option<Vec<String>>,
    pub row_names: Option<Vec<String>>,
}

impl SparseLinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Adds a column and returns its index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.col_lower.push(lower);
        self.col_upper.push(upper);
        if let Some(names) = self.col_names.as_mut() {
            names.push(format!("x{}", names.len()));
        }
        self.objective.len() - 1
    }

    pub fn add_named_var(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        if self.col_names.is_none() {
            self.col_names = Some((0..self.num_vars()).map(|j| format!("x{j}")).collect());
        }
        let j = self.add_var(cost, lower, upper);
        self.col_names.as_mut().expect("names initialized")[j] = name.into();
        j
    }

    /// Adds a row `sum(coef * x) <sense> rhs` and returns its index.
    pub fn add_row(&mut self, sense: Sense, rhs: f64, coefs: &[(usize, f64)]) -> usize {
        let r = self.rows.len();
        self.rows.push(Row { sense, rhs });
        self.triplets.extend(coefs.iter().map(|&(j, v)| (r, j, v)));
        if let Some(names) = self.row_names.as_mut() {
            names.push(format!("r{r}"));
        }
        r
    }

    pub fn add_named_row(&mut self, name: impl Into<String>, sense: Sense, rhs: f64, coefs: &[(usize, f64)]) -> usize {
        if self.row_names.is_none() {
            self.row_names = Some((0..self.num_rows()).map(|r| format!("r{r}")).collect());
        }
        let r = self.add_row(sense, rhs, coefs);
        self.row_names.as_mut().expect("names initialized")[r] = name.into();
        r
    }

    /// Checks dimensional consistency and that every number is usable.
    pub fn validate(&self) -> Result<(), OptError> {
        let n = self.num_vars();
        if self.col_lower.len() != n || self.col_upper.len() != n {
            return Err(OptError::Malformed(format!(
                "{n} objective entries but {} lower / {} upper bounds",
                self.col_lower.len(),
                self.col_upper.len()
            )));
        }
        if let Some(names) = &self.col_names {
            if names.len() != n {
                return Err(OptError::Malformed("column name count mismatch".into()));
            }
        }
        if let Some(names) = &self.row_names {
            if names.len() != self.num_rows() {
                return Err(OptError::Malformed("row name count mismatch".into()));
            }
        }
        for (j, &c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return Err(OptError::Malformed(format!("objective coefficient of column {j} is {c}")));
            }
            let (lo, hi) = (self.col_lower[j], self.col_upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(OptError::Malformed(format!("column {j} has bounds [{lo}, {hi}]")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(OptError::Malformed(format!("row {r} has rhs {}", row.rhs)));
            }
        }
        for &(r, j, v) in &self.triplets {
            if r >= self.num_rows() || j >= n {
                return Err(OptError::Malformed(format!("triplet ({r}, {j}) outside {}x{n}", self.num_rows())));
            }
            if !v.is_finite() {
                return Err(OptError::Malformed(format!("coefficient ({r}, {j}) is {v}")));
            }
        }
        Ok(())
    }

    /// Objective value of an assignment.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Row activities `A x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows()];
        for &(r, j, v) in &self.triplets {
            act[r] += v * x[j];
        }
        act
    }

    /// Largest absolute violation of any row or bound by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.col_lower[j] - v).max(v - self.col_upper[j]);
        }
        for (row, a) in self.rows.iter().zip(self.activities(x)) {
            let viol = match row.sense {
                Sense::Eq => (a - row.rhs).abs(),
                Sense::Le => a - row.rhs,
                Sense::Ge => row.rhs - a,
            };
            worst = worst.max(viol);
        }
        worst
    }
}

/// Position of a variable relative to the simplex basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

/// Simplex basis over structural columns followed by one logical per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub columns: Vec<BasisState>,
    pub rows: Vec<BasisState>,
}

impl Basis {
    /// The all-logical basis.
    pub fn slack(num_vars: usize, num_rows: usize) -> Self {
        Basis {
            columns: vec![BasisState::AtLower; num_vars],
            rows: vec![BasisState::Basic; num_rows],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpOptions {
    pub max_iterations: u64,
    pub time_limit: Option<Duration>,
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub stall_threshold: u32,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            max_iterations: 5_000_000,
            time_limit: None,
            stall_threshold: 60,
        }
    }
}

/// Solves `lp` from the slack basis.
pub fn solve_lp(lp: &SparseLinearProgram) -> Result<SolveResult, OptError> {
    solve_lp_warm(lp, &LpOptions::default(), None)
}

/// Solves `lp`, optionally starting from `start` (which is repaired if it is
/// singular or has the wrong number of basic variables).
pub fn solve_lp_warm(
    lp: &SparseLinearProgram,
    options: &LpOptions,
    start: Option<&Basis>,
) -> Result<SolveResult, OptError> {
    lp.validate()?;
    let started = std::time::Instant::now();
    let mut solver = SimplexSolver::new(lp);
    let outcome = solver.solve(&lp.col_lower, &lp.col_upper, start, options, started)?;
    Ok(outcome_to_result(lp, outcome, started))
}

pub(crate) fn outcome_to_result(
    lp: &SparseLinearProgram,
    outcome: SimplexOutcome,
    started: std::time::Instant,
) -> SolveResult {
    let stats = SolveStats {
        iterations: outcome.iterations,
        wall_time: started.elapsed(),
        ..SolveStats::default()
    };
    match outcome.status {
        Status::Optimal => {
            let objective = lp.evaluate(&outcome.values);
            SolveResult {
                status: Status::Optimal,
                objective,
                values: Some(outcome.values),
                lower_bound: objective,
                duals: Some(outcome.duals),
                basis: Some(outcome.basis),
                stats,
            }
        }
        status => {
            let mut r = SolveResult::without_solution(status, stats);
            r.basis = Some(outcome.basis);
            r
        }
    }
}
