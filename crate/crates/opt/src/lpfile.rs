//! CPLEX LP text format writer, for feeding instances to external solvers.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::lp::{Sense, SparseLinearProgram};
use crate::milp::MilpProblem;

/// Writes `lp` (and, when given, its integer columns) in LP format.
pub fn write_lp<W: Write>(out: &mut W, lp: &SparseLinearProgram, integers: &[usize]) -> io::Result<()> {
    let col_name = |j: usize| -> String {
        lp.col_names
            .as_ref()
            .map(|n| sanitize(&n[j]))
            .unwrap_or_else(|| format!("x{j}"))
    };
    let row_name = |r: usize| -> String {
        lp.row_names
            .as_ref()
            .map(|n| sanitize(&n[r]))
            .unwrap_or_else(|| format!("c{r}"))
    };

    writeln!(out, "\\ generated by amod-opt")?;
    writeln!(out, "Minimize")?;
    let terms: Vec<(usize, f64)> = lp
        .objective
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(j, &c)| (j, c))
        .collect();
    writeln!(out, " obj: {}", linear_expr(&terms, &col_name))?;

    writeln!(out, "Subject To")?;
    let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_rows()];
    for &(r, j, v) in &lp.triplets {
        by_row[r].push((j, v));
    }
    for (r, row) in lp.rows.iter().enumerate() {
        let op = match row.sense {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        };
        writeln!(out, " {}: {} {} {}", row_name(r), linear_expr(&by_row[r], &col_name), op, fmt_num(row.rhs))?;
    }

    writeln!(out, "Bounds")?;
    for j in 0..lp.num_vars() {
        let (lo, hi) = (lp.col_lower[j], lp.col_upper[j]);
        let name = col_name(j);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) if lo == hi => writeln!(out, " {name} = {}", fmt_num(lo))?,
            (true, true) => writeln!(out, " {} <= {name} <= {}", fmt_num(lo), fmt_num(hi))?,
            (true, false) if lo == 0.0 => {}
            (true, false) => writeln!(out, " {name} >= {}", fmt_num(lo))?,
            (false, true) => writeln!(out, " -inf <= {name} <= {}", fmt_num(hi))?,
            (false, false) => writeln!(out, " {name} free")?,
        }
    }
    if !integers.is_empty() {
        writeln!(out, "Generals")?;
        for chunk in integers.chunks(8) {
            let names: Vec<String> = chunk.iter().map(|&j| col_name(j)).collect();
            writeln!(out, " {}", names.join(" "))?;
        }
    }
    writeln!(out, "End")
}

pub fn write_milp<W: Write>(out: &mut W, problem: &MilpProblem) -> io::Result<()> {
    write_lp(out, &problem.lp, &problem.integers)
}

fn linear_expr(terms: &[(usize, f64)], name: &dyn Fn(usize) -> String) -> String {
    if terms.is_empty() {
        return "0".to_string();
    }
    let mut s = String::new();
    for (k, &(j, v)) in terms.iter().enumerate() {
        let sign = if v < 0.0 { "-" } else { "+" };
        if k > 0 || v < 0.0 {
            let _ = write!(s, "{sign} ");
        }
        let mag = v.abs();
        if mag != 1.0 {
            let _ = write!(s, "{} ", fmt_num(mag));
        }
        let _ = write!(s, "{} ", name(j));
    }
    s.trim_end().to_string()
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}

/// LP format names may not contain whitespace or operator characters.
fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.()[]{}".contains(c) { c } else { '_' })
        .collect()
}
