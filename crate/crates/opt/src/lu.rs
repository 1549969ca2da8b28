//! Sparse LU factorization of a simplex basis with product-form updates.
//!
//! Pivots are chosen Markowitz-style: column and row singletons first (these
//! cover the whole basis for pure network problems), then the sparsest column
//! under a threshold rule for whatever bump remains.

use crate::tol;

/// Basis columns that could not be pivoted, with the rows left uncovered.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactor {
    m: usize,
    // L as a sequence of row operations: row[i] -= l * row[pivot_row].
    l_row: Vec<usize>,
    l_start: Vec<usize>,
    l_index: Vec<usize>,
    l_value: Vec<f64>,
    // U in pivot order; entries point at basis positions pivoted later.
    piv_row: Vec<usize>,
    piv_pos: Vec<usize>,
    diag: Vec<f64>,
    u_start: Vec<usize>,
    u_pos: Vec<usize>,
    u_value: Vec<f64>,
    // Product-form eta file.
    eta_pos: Vec<usize>,
    eta_pivot: Vec<f64>,
    eta_start: Vec<usize>,
    eta_index: Vec<usize>,
    eta_value: Vec<f64>,
}

const ROW_SINGLETON_THRESHOLD: f64 = 0.01;
const MARKOWITZ_THRESHOLD: f64 = 0.1;
const MARKOWITZ_CANDIDATES: usize = 4;

impl LuFactor {
    /// Factorizes the `m x m` matrix whose column at position `p` is `columns[p]`
    /// (row index, value pairs).
    pub fn factorize(m: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(columns.len(), m);
        let mut cols: Vec<Vec<(usize, f64)>> = columns
            .iter()
            .map(|c| c.iter().copied().filter(|&(_, v)| v.abs() > tol::DROP).collect())
            .collect();
        let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (p, col) in cols.iter().enumerate() {
            for &(r, _) in col {
                row_cols[r].push(p);
            }
        }
        let mut col_active = vec![true; m];
        let mut row_active = vec![true; m];
        let mut col_stack: Vec<usize> = (0..m).filter(|&p| cols[p].len() == 1).collect();
        let mut row_stack: Vec<usize> = (0..m).filter(|&r| row_cols[r].len() == 1).collect();
        col_stack.reverse();
        row_stack.reverse();

        let mut lu = LuFactor {
            m,
            l_start: vec![0],
            u_start: vec![0],
            eta_start: vec![0],
            ..Default::default()
        };
        let mut urow: Vec<(usize, f64)> = Vec::new();
        let mut lcol: Vec<(usize, f64)> = Vec::new();

        for _ in 0..m {
            let pivot = Self::pick_pivot(&cols, &row_cols, &col_active, &mut col_stack, &mut row_stack);
            let Some((r, c)) = pivot else {
                let positions = (0..m).filter(|&p| col_active[p]).collect();
                let rows = (0..m).filter(|&r| row_active[r]).collect();
                return Err(Singular { positions, rows });
            };
            let pv = cols[c].iter().find(|e| e.0 == r).map(|e| e.1).expect("pivot entry present");

            lcol.clear();
            lcol.extend(cols[c].iter().filter(|e| e.0 != r).map(|&(i, v)| (i, v / pv)));
            urow.clear();
            for &cp in &row_cols[r] {
                if cp != c {
                    let v = cols[cp].iter().find(|e| e.0 == r).map(|e| e.1).unwrap_or(0.0);
                    urow.push((cp, v));
                }
            }

            // Schur complement update; fill-in extends the row patterns.
            if !lcol.is_empty() {
                for &(cp, u) in &urow {
                    for &(i, l) in &lcol {
                        let delta = l * u;
                        match cols[cp].iter_mut().find(|e| e.0 == i) {
                            Some(e) => e.1 -= delta,
                            None => {
                                cols[cp].push((i, -delta));
                                row_cols[i].push(cp);
                            }
                        }
                    }
                }
            }

            // Retire pivot row from the other columns.
            for &(cp, _) in &urow {
                let col = &mut cols[cp];
                if let Some(k) = col.iter().position(|e| e.0 == r) {
                    col.swap_remove(k);
                }
                if col.len() == 1 {
                    col_stack.push(cp);
                }
            }
            // Retire pivot column from the other rows.
            for &(i, _) in &lcol {
                let rc = &mut row_cols[i];
                if let Some(k) = rc.iter().position(|&p| p == c) {
                    rc.swap_remove(k);
                }
                if rc.len() == 1 {
                    row_stack.push(i);
                }
            }
            row_cols[r].clear();
            cols[c].clear();
            col_active[c] = false;
            row_active[r] = false;

            if !lcol.is_empty() {
                lu.l_row.push(r);
                for &(i, l) in &lcol {
                    lu.l_index.push(i);
                    lu.l_value.push(l);
                }
                lu.l_start.push(lu.l_index.len());
            }
            lu.piv_row.push(r);
            lu.piv_pos.push(c);
            lu.diag.push(pv);
            for &(cp, u) in &urow {
                if u.abs() > tol::DROP {
                    lu.u_pos.push(cp);
                    lu.u_value.push(u);
                }
            }
            lu.u_start.push(lu.u_pos.len());
        }
        Ok(lu)
    }

    fn pick_pivot(
        cols: &[Vec<(usize, f64)>],
        row_cols: &[Vec<usize>],
        col_active: &[bool],
        col_stack: &mut Vec<usize>,
        row_stack: &mut Vec<usize>,
    ) -> Option<(usize, usize)> {
        while let Some(c) = col_stack.pop() {
            if col_active[c] && cols[c].len() == 1 && cols[c][0].1.abs() > tol::PIVOT {
                return Some((cols[c][0].0, c));
            }
        }
        while let Some(r) = row_stack.pop() {
            if row_cols[r].len() != 1 {
                continue;
            }
            let c = row_cols[r][0];
            if !col_active[c] {
                continue;
            }
            let max = cols[c].iter().fold(0.0f64, |a, e| a.max(e.1.abs()));
            let v = cols[c].iter().find(|e| e.0 == r).map(|e| e.1.abs()).unwrap_or(0.0);
            if v > tol::PIVOT && v >= ROW_SINGLETON_THRESHOLD * max {
                return Some((r, c));
            }
        }
        // Markowitz search over the sparsest active columns.
        let mut candidates: Vec<(usize, usize)> = Vec::with_capacity(MARKOWITZ_CANDIDATES + 1);
        for (c, col) in cols.iter().enumerate() {
            if !col_active[c] || col.is_empty() {
                continue;
            }
            let key = (col.len(), c);
            let at = candidates.partition_point(|k| *k < key);
            if at < MARKOWITZ_CANDIDATES {
                candidates.insert(at, key);
                candidates.truncate(MARKOWITZ_CANDIDATES);
            }
        }
        let mut best: Option<(usize, usize, usize, f64)> = None;
        for &(count, c) in &candidates {
            let max = cols[c].iter().fold(0.0f64, |a, e| a.max(e.1.abs()));
            if max <= tol::PIVOT {
                continue;
            }
            for &(r, v) in &cols[c] {
                if v.abs() < MARKOWITZ_THRESHOLD * max || v.abs() <= tol::PIVOT {
                    continue;
                }
                let cost = (row_cols[r].len() - 1) * (count - 1);
                let better = match best {
                    None => true,
                    Some((bc, _, _, bv)) => cost < bc || (cost == bc && v.abs() > bv),
                };
                if better {
                    best = Some((cost, r, c, v.abs()));
                }
            }
        }
        best.map(|(_, r, c, _)| (r, c))
    }

    pub fn num_updates(&self) -> usize {
        self.eta_pos.len()
    }

    /// Solves `B x = b`. `rhs` is indexed by row and is destroyed; the result
    /// is written to `out`, indexed by basis position.
    pub fn ftran(&self, rhs: &mut [f64], out: &mut [f64]) {
        for k in 0..self.l_row.len() {
            let v = rhs[self.l_row[k]];
            if v != 0.0 {
                for t in self.l_start[k]..self.l_start[k + 1] {
                    rhs[self.l_index[t]] -= self.l_value[t] * v;
                }
            }
        }
        for k in (0..self.m).rev() {
            let mut s = rhs[self.piv_row[k]];
            for t in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_value[t] * out[self.u_pos[t]];
            }
            out[self.piv_pos[k]] = s / self.diag[k];
        }
        for e in 0..self.eta_pos.len() {
            let p = self.eta_pos[e];
            let xp = out[p] / self.eta_pivot[e];
            out[p] = xp;
            if xp != 0.0 {
                for t in self.eta_start[e]..self.eta_start[e + 1] {
                    out[self.eta_index[t]] -= self.eta_value[t] * xp;
                }
            }
        }
    }

    /// Solves `B' y = c`. `c` is indexed by basis position and is destroyed;
    /// the result is written to `out`, indexed by row.
    pub fn btran(&self, c: &mut [f64], out: &mut [f64]) {
        for e in (0..self.eta_pos.len()).rev() {
            let p = self.eta_pos[e];
            let mut s = c[p];
            for t in self.eta_start[e]..self.eta_start[e + 1] {
                s -= self.eta_value[t] * c[self.eta_index[t]];
            }
            c[p] = s / self.eta_pivot[e];
        }
        for k in 0..self.m {
            let z = c[self.piv_pos[k]] / self.diag[k];
            out[self.piv_row[k]] = z;
            if z != 0.0 {
                for t in self.u_start[k]..self.u_start[k + 1] {
                    c[self.u_pos[t]] -= self.u_value[t] * z;
                }
            }
        }
        for k in (0..self.l_row.len()).rev() {
            let mut s = 0.0;
            for t in self.l_start[k]..self.l_start[k + 1] {
                s += self.l_value[t] * out[self.l_index[t]];
            }
            out[self.l_row[k]] -= s;
        }
    }

    /// Records the replacement of the column at `pos` by a column whose FTRAN
    /// image is `alpha` (indexed by position).
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        self.eta_pos.push(pos);
        self.eta_pivot.push(alpha[pos]);
        for (i, &a) in alpha.iter().enumerate() {
            if i != pos && a.abs() > tol::DROP {
                self.eta_index.push(i);
                self.eta_value.push(a);
            }
        }
        self.eta_start.push(self.eta_index.len());
    }

    pub fn eta_nonzeros(&self) -> usize {
        self.eta_index.len()
    }
}
