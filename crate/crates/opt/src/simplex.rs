//! Bounded primal revised simplex.
//!
//! Rows are turned into equalities with one logical per row (`A x - s = 0`,
//! `row_lo <= s <= row_hi`). Phase 1 minimizes the sum of bound violations of
//! the basic variables from whatever basis it starts from, so a warm start
//! after a bound change needs no special handling. Pricing is partial Dantzig;
//! after `stall_threshold` consecutive degenerate pivots the solver falls back
//! to Bland's rule until the objective moves again. The ratio test is the
//! two-pass Harris test.

use std::time::Instant;

use crate::lp::{Basis, BasisState, LpOptions, Sense, SparseLinearProgram};
use crate::lu::LuFactor;
use crate::{tol, OptError, Status};

const REFACTOR_EVERY: usize = 96;
const HARRIS_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const PRICING_SEGMENTS: usize = 16;
const MIN_SEGMENT: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    Lower,
    Upper,
    Free,
}

pub(crate) struct SimplexOutcome {
    pub status: Status,
    pub values: Vec<f64>,
    pub duals: Vec<f64>,
    pub basis: Basis,
    pub iterations: u64,
}

/// Column-compressed copy of an LP, reusable across solves with different
/// column bounds.
pub(crate) struct SimplexSolver {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    row_index: Vec<usize>,
    value: Vec<f64>,
    cost: Vec<f64>,
    row_lo: Vec<f64>,
    row_hi: Vec<f64>,
    cost_scale: f64,
}

struct Work {
    lo: Vec<f64>,
    hi: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    x: Vec<f64>,
    lu: LuFactor,
    // Scratch.
    row_buf: Vec<f64>,
    pos_buf: Vec<f64>,
    alpha: Vec<f64>,
    y: Vec<f64>,
    price_cursor: usize,
}

impl SimplexSolver {
    pub fn new(lp: &SparseLinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut sorted: Vec<(usize, usize, f64)> = lp.triplets.iter().map(|&(r, c, v)| (c, r, v)).collect();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut col_start = vec![0usize; n + 1];
        let mut row_index = Vec::with_capacity(sorted.len());
        let mut value: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (c, r, v) in sorted {
            if last == Some((c, r)) {
                *value.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((c, r));
            row_index.push(r);
            value.push(v);
            col_start[c + 1] = row_index.len();
        }
        for c in 0..n {
            col_start[c + 1] = col_start[c + 1].max(col_start[c]);
        }
        let mut cost = lp.objective.clone();
        cost.resize(n + m, 0.0);
        let (row_lo, row_hi) = lp
            .rows
            .iter()
            .map(|row| match row.sense {
                Sense::Eq => (row.rhs, row.rhs),
                Sense::Le => (f64::NEG_INFINITY, row.rhs),
                Sense::Ge => (row.rhs, f64::INFINITY),
            })
            .unzip();
        let cost_scale = lp.objective.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        SimplexSolver {
            n,
            m,
            col_start,
            row_index,
            value,
            cost,
            row_lo,
            row_hi,
            cost_scale,
        }
    }

    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if j < self.n {
            for t in self.col_start[j]..self.col_start[j + 1] {
                out.push((self.row_index[t], self.value[t]));
            }
        } else {
            out.push((j - self.n, -1.0));
        }
    }

    #[inline]
    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut s = 0.0;
            for t in self.col_start[j]..self.col_start[j + 1] {
                s += self.value[t] * y[self.row_index[t]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }

    fn scatter_column(&self, j: usize, scale: f64, dst: &mut [f64]) {
        if j < self.n {
            for t in self.col_start[j]..self.col_start[j + 1] {
                dst[self.row_index[t]] += scale * self.value[t];
            }
        } else {
            dst[j - self.n] -= scale;
        }
    }

    pub fn solve(
        &mut self,
        col_lo: &[f64],
        col_hi: &[f64],
        start: Option<&Basis>,
        options: &LpOptions,
        started: Instant,
    ) -> Result<SimplexOutcome, OptError> {
        let (n, m) = (self.n, self.m);
        let total = n + m;
        let mut lo = col_lo.to_vec();
        let mut hi = col_hi.to_vec();
        lo.extend_from_slice(&self.row_lo);
        hi.extend_from_slice(&self.row_hi);
        for j in 0..total {
            if lo[j] > hi[j] + tol::FEASIBILITY {
                // Crossed bounds: report infeasible straight away.
                return Ok(SimplexOutcome {
                    status: Status::Infeasible,
                    values: vec![f64::NAN; n],
                    duals: vec![0.0; m],
                    basis: start.cloned().unwrap_or_else(|| Basis::slack(n, m)),
                    iterations: 0,
                });
            }
        }

        let mut state = vec![VarState::Lower; total];
        let mut basis: Vec<usize> = Vec::with_capacity(m);
        match start {
            Some(b) if b.columns.len() == n && b.rows.len() == m => {
                for j in 0..total {
                    let s = if j < n { b.columns[j] } else { b.rows[j - n] };
                    state[j] = match s {
                        BasisState::Basic => VarState::Basic,
                        BasisState::AtLower => VarState::Lower,
                        BasisState::AtUpper => VarState::Upper,
                        BasisState::Free => VarState::Free,
                    };
                    if state[j] == VarState::Basic {
                        if basis.len() < m {
                            basis.push(j);
                        } else {
                            state[j] = VarState::Lower;
                        }
                    }
                }
            }
            _ => {
                for r in 0..m {
                    state[n + r] = VarState::Basic;
                    basis.push(n + r);
                }
            }
        }
        // Pad a short basis with logicals; the repair pass sorts out any
        // resulting singularity.
        if basis.len() < m {
            for r in 0..m {
                if basis.len() == m {
                    break;
                }
                if state[n + r] != VarState::Basic {
                    state[n + r] = VarState::Basic;
                    basis.push(n + r);
                }
            }
        }
        for j in 0..total {
            if state[j] != VarState::Basic {
                state[j] = normalize_nonbasic(state[j], lo[j], hi[j]);
            }
        }
        let x: Vec<f64> = (0..total)
            .map(|j| nonbasic_value(state[j], lo[j], hi[j]))
            .collect();

        let mut w = Work {
            lo,
            hi,
            state,
            basis,
            x,
            lu: LuFactor::default(),
            row_buf: vec![0.0; m],
            pos_buf: vec![0.0; m],
            alpha: vec![0.0; m],
            y: vec![0.0; m],
            price_cursor: 0,
        };
        self.refactor(&mut w)?;
        self.compute_basic_values(&mut w);
        self.iterate(&mut w, options, started)
    }

    fn refactor(&self, w: &mut Work) -> Result<(), OptError> {
        let m = self.m;
        let mut colbuf = Vec::new();
        for _attempt in 0..4 {
            let cols: Vec<Vec<(usize, f64)>> = w
                .basis
                .iter()
                .map(|&j| {
                    self.column(j, &mut colbuf);
                    colbuf.clone()
                })
                .collect();
            match LuFactor::factorize(m, &cols) {
                Ok(lu) => {
                    w.lu = lu;
                    return Ok(());
                }
                Err(sing) => {
                    for (&p, &r) in sing.positions.iter().zip(&sing.rows) {
                        let out = w.basis[p];
                        let logical = self.n + r;
                        // An uncovered row's logical cannot already be basic.
                        debug_assert_ne!(w.state[logical], VarState::Basic);
                        w.state[out] = nearest_bound_state(w.x[out], w.lo[out], w.hi[out]);
                        w.x[out] = nonbasic_value(w.state[out], w.lo[out], w.hi[out]);
                        w.state[logical] = VarState::Basic;
                        w.basis[p] = logical;
                    }
                }
            }
        }
        Err(OptError::Numerical("basis repair did not converge".into()))
    }

    fn compute_basic_values(&self, w: &mut Work) {
        let rhs = &mut w.row_buf;
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n + self.m {
            if w.state[j] != VarState::Basic && w.x[j] != 0.0 {
                self.scatter_column(j, -w.x[j], rhs);
            }
        }
        w.lu.ftran(rhs, &mut w.pos_buf);
        for (p, &j) in w.basis.iter().enumerate() {
            w.x[j] = w.pos_buf[p];
        }
    }

    fn max_infeasibility(&self, w: &Work) -> f64 {
        w.basis
            .iter()
            .map(|&j| (w.lo[j] - w.x[j]).max(w.x[j] - w.hi[j]).max(0.0))
            .fold(0.0, f64::max)
    }

    fn iterate(&self, w: &mut Work, options: &LpOptions, started: Instant) -> Result<SimplexOutcome, OptError> {
        let (n, m) = (self.n, self.m);
        let total = n + m;
        let mut iterations: u64 = 0;
        let mut stall: u32 = 0;
        let mut bland = false;
        let mut cleanups = 0;
        let mut ptol = PRIMAL_TOL;
        let mut colbuf = Vec::new();

        loop {
            if w.lu.num_updates() >= REFACTOR_EVERY || w.lu.eta_nonzeros() > 20 * m + 1000 {
                self.refactor(w)?;
                self.compute_basic_values(w);
            }
            let phase_one = w
                .basis
                .iter()
                .any(|&j| w.x[j] < w.lo[j] - ptol || w.x[j] > w.hi[j] + ptol);

            // Duals for the current phase objective.
            for (p, &j) in w.basis.iter().enumerate() {
                w.pos_buf[p] = if phase_one {
                    if w.x[j] < w.lo[j] - ptol {
                        -1.0
                    } else if w.x[j] > w.hi[j] + ptol {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.cost[j]
                };
            }
            w.lu.btran(&mut w.pos_buf, &mut w.y);

            let dtol = if phase_one { tol::OPTIMALITY } else { tol::OPTIMALITY * self.cost_scale };
            let entering = self.price(w, phase_one, dtol, bland);

            let Some((q, dir)) = entering else {
                // No improving column: either done, or drift needs a clean-up.
                self.refactor(w)?;
                self.compute_basic_values(w);
                let worst = self.max_infeasibility(w);
                if !phase_one && worst <= tol::FEASIBILITY {
                    return Ok(self.finish(w, Status::Optimal, iterations));
                }
                if phase_one && worst > tol::FEASIBILITY && cleanups >= 2 {
                    return Ok(self.finish(w, Status::Infeasible, iterations));
                }
                if phase_one && worst <= tol::FEASIBILITY {
                    // Residual violations are round-off; accept them.
                    ptol = tol::FEASIBILITY;
                }
                cleanups += 1;
                if cleanups > 8 {
                    return Err(OptError::Numerical("simplex failed to settle after clean-up".into()));
                }
                continue;
            };

            if iterations >= options.max_iterations
                || options.time_limit.is_some_and(|t| started.elapsed() > t)
            {
                return Ok(self.finish(w, Status::LimitReached, iterations));
            }
            iterations += 1;

            // Entering column in basis coordinates.
            w.row_buf.iter_mut().for_each(|v| *v = 0.0);
            self.column(q, &mut colbuf);
            for &(r, v) in &colbuf {
                w.row_buf[r] = v;
            }
            w.lu.ftran(&mut w.row_buf, &mut w.alpha);

            let step = self.ratio_test(w, q, dir, phase_one, bland, ptol);
            match step {
                Step::Unbounded => {
                    if phase_one {
                        return Err(OptError::Numerical("unbounded ray in phase 1".into()));
                    }
                    return Ok(self.finish(w, Status::Unbounded, iterations));
                }
                Step::Flip { theta } => {
                    self.apply_step(w, q, dir, theta);
                    w.state[q] = if dir > 0.0 { VarState::Upper } else { VarState::Lower };
                    w.x[q] = nonbasic_value(w.state[q], w.lo[q], w.hi[q]);
                    stall = 0;
                    bland = false;
                }
                Step::Pivot { pos, theta, to_upper } => {
                    self.apply_step(w, q, dir, theta);
                    let out = w.basis[pos];
                    w.state[out] = if to_upper { VarState::Upper } else { VarState::Lower };
                    if w.lo[out] == f64::NEG_INFINITY && w.hi[out] == f64::INFINITY {
                        w.state[out] = VarState::Free;
                    }
                    w.x[out] = nonbasic_value(w.state[out], w.lo[out], w.hi[out]);
                    w.state[q] = VarState::Basic;
                    w.basis[pos] = q;
                    w.lu.update(pos, &w.alpha);
                    if theta <= DEGENERATE_STEP {
                        stall += 1;
                        if stall > options.stall_threshold {
                            bland = true;
                        }
                    } else {
                        stall = 0;
                        bland = false;
                    }
                }
            }
            debug_assert!(total == w.state.len());
        }
    }

    fn apply_step(&self, w: &mut Work, q: usize, dir: f64, theta: f64) {
        if theta == 0.0 {
            return;
        }
        for (p, &j) in w.basis.iter().enumerate() {
            let a = w.alpha[p];
            if a != 0.0 {
                w.x[j] -= dir * theta * a;
            }
        }
        w.x[q] += dir * theta;
    }

    /// Returns the entering variable and its direction (+1 increase, -1 decrease).
    fn price(&self, w: &mut Work, phase_one: bool, dtol: f64, bland: bool) -> Option<(usize, f64)> {
        let total = self.n + self.m;
        let eligible = |j: usize, w: &Work| -> Option<(f64, f64)> {
            let st = w.state[j];
            if st == VarState::Basic || w.lo[j] == w.hi[j] {
                return None;
            }
            let c = if phase_one { 0.0 } else { self.cost[j] };
            let d = c - self.dot_column(j, &w.y);
            match st {
                VarState::Lower if d < -dtol => Some((d, 1.0)),
                VarState::Upper if d > dtol => Some((d, -1.0)),
                VarState::Free if d.abs() > dtol => Some((d, -d.signum())),
                _ => None,
            }
        };
        if bland {
            return (0..total).find_map(|j| eligible(j, w).map(|(_, dir)| (j, dir)));
        }
        let segment = (total / PRICING_SEGMENTS).max(MIN_SEGMENT).min(total);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut scanned = 0;
        let mut j = w.price_cursor % total.max(1);
        while scanned < total {
            if let Some((d, dir)) = eligible(j, w) {
                let score = d.abs();
                if best.is_none_or(|b| score > b.2) {
                    best = Some((j, dir, score));
                }
            }
            scanned += 1;
            j += 1;
            if j == total {
                j = 0;
            }
            if scanned % segment == 0 && best.is_some() {
                break;
            }
        }
        w.price_cursor = j;
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ratio_test(&self, w: &Work, q: usize, dir: f64, phase_one: bool, bland: bool, ptol: f64) -> Step {
        // Pass 1: largest step allowed with bounds relaxed by HARRIS_TOL.
        let mut theta_max = f64::INFINITY;
        let limit = |p: usize, relax: f64| -> Option<(f64, bool)> {
            let a = w.alpha[p];
            if a.abs() <= tol::PIVOT {
                return None;
            }
            let j = w.basis[p];
            let rate = -dir * a;
            let (x, lo, hi) = (w.x[j], w.lo[j], w.hi[j]);
            if rate < 0.0 {
                let target = if phase_one && x > hi + ptol {
                    hi
                } else if phase_one && x < lo - ptol {
                    return None;
                } else {
                    lo
                };
                if target == f64::NEG_INFINITY {
                    return None;
                }
                Some((((x - target + relax) / -rate).max(0.0), target == hi))
            } else {
                let target = if phase_one && x < lo - ptol {
                    lo
                } else if phase_one && x > hi + ptol {
                    return None;
                } else {
                    hi
                };
                if target == f64::INFINITY {
                    return None;
                }
                Some((((target - x + relax) / rate).max(0.0), target == hi))
            }
        };
        for p in 0..self.m {
            if let Some((t, _)) = limit(p, HARRIS_TOL) {
                theta_max = theta_max.min(t);
            }
        }
        let flip = if w.lo[q].is_finite() && w.hi[q].is_finite() {
            w.hi[q] - w.lo[q]
        } else {
            f64::INFINITY
        };
        if theta_max == f64::INFINITY && flip == f64::INFINITY {
            return Step::Unbounded;
        }
        if flip <= theta_max {
            return Step::Flip { theta: flip };
        }
        // Pass 2: among rows whose exact ratio fits, the largest pivot wins
        // (or the lowest variable index under Bland's rule).
        let mut chosen: Option<(usize, f64, bool)> = None;
        let mut chosen_key = f64::NEG_INFINITY;
        for p in 0..self.m {
            if let Some((t, to_upper)) = limit(p, 0.0) {
                if t <= theta_max {
                    let key = if bland { -(w.basis[p] as f64) } else { w.alpha[p].abs() };
                    if key > chosen_key {
                        chosen_key = key;
                        chosen = Some((p, t, to_upper));
                    }
                }
            }
        }
        match chosen {
            Some((pos, theta, to_upper)) => Step::Pivot { pos, theta, to_upper },
            None => Step::Unbounded,
        }
    }

    fn finish(&self, w: &mut Work, status: Status, iterations: u64) -> SimplexOutcome {
        let n = self.n;
        // Duals of the true objective at the final basis.
        for (p, &j) in w.basis.iter().enumerate() {
            w.pos_buf[p] = self.cost[j];
        }
        w.lu.btran(&mut w.pos_buf, &mut w.y);
        let to_state = |s: VarState| match s {
            VarState::Basic => BasisState::Basic,
            VarState::Lower => BasisState::AtLower,
            VarState::Upper => BasisState::AtUpper,
            VarState::Free => BasisState::Free,
        };
        let mut values = w.x[..n].to_vec();
        for (j, v) in values.iter_mut().enumerate() {
            // Clip round-off against bounds.
            *v = v.clamp(w.lo[j], w.hi[j]);
        }
        SimplexOutcome {
            status,
            values,
            duals: w.y.clone(),
            basis: Basis {
                columns: w.state[..n].iter().map(|&s| to_state(s)).collect(),
                rows: w.state[n..].iter().map(|&s| to_state(s)).collect(),
            },
            iterations,
        }
    }
}

enum Step {
    Unbounded,
    Flip { theta: f64 },
    Pivot { pos: usize, theta: f64, to_upper: bool },
}

fn normalize_nonbasic(s: VarState, lo: f64, hi: f64) -> VarState {
    match (s, lo.is_finite(), hi.is_finite()) {
        (_, false, false) => VarState::Free,
        (VarState::Upper, _, true) => VarState::Upper,
        (_, true, _) => VarState::Lower,
        (_, false, true) => VarState::Upper,
    }
}

fn nearest_bound_state(x: f64, lo: f64, hi: f64) -> VarState {
    match (lo.is_finite(), hi.is_finite()) {
        (false, false) => VarState::Free,
        (true, false) => VarState::Lower,
        (false, true) => VarState::Upper,
        (true, true) => {
            if (x - lo).abs() <= (hi - x).abs() {
                VarState::Lower
            } else {
                VarState::Upper
            }
        }
    }
}

fn nonbasic_value(s: VarState, lo: f64, hi: f64) -> f64 {
    match s {
        VarState::Lower => lo,
        VarState::Upper => hi,
        VarState::Free | VarState::Basic => 0.0,
    }
}
