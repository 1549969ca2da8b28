//! Branch-and-bound against enumeration of integer points.

use std::time::Duration;

use amod_opt::{solve_lp, solve_milp, MilpLimits, MilpProblem, Sense, SparseLinearProgram, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Best objective over all integer points in the column box.
fn enumerate(lp: &SparseLinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let lo: Vec<i64> = lp.col_lower.iter().map(|v| v.ceil() as i64).collect();
    let hi: Vec<i64> = lp.col_upper.iter().map(|v| v.floor() as i64).collect();
    if (0..n).any(|j| lo[j] > hi[j]) {
        return None;
    }
    let mut x = lo.clone();
    let mut best: Option<f64> = None;
    loop {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        if lp.max_violation(&xf) <= 1e-9 {
            let c = lp.evaluate(&xf);
            if best.is_none_or(|b| c < b) {
                best = Some(c);
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            if x[k] < hi[k] {
                x[k] += 1;
                break;
            }
            x[k] = lo[k];
            k += 1;
        }
    }
}

#[test]
fn knapsack_matches_enumeration() {
    // max 5a + 4b + 3c  s.t.  2a + 3b + c <= 5, 4a + b + 2c <= 11, binaries.
    let mut lp = SparseLinearProgram::new();
    let a = lp.add_var(-5.0, 0.0, 1.0);
    let b = lp.add_var(-4.0, 0.0, 1.0);
    let c = lp.add_var(-3.0, 0.0, 1.0);
    lp.add_row(Sense::Le, 5.0, &[(a, 2.0), (b, 3.0), (c, 1.0)]);
    lp.add_row(Sense::Le, 11.0, &[(a, 4.0), (b, 1.0), (c, 2.0)]);
    let expected = enumerate(&lp).unwrap();
    let r = solve_milp(&MilpProblem::all_integer(lp), MilpLimits::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert_eq!(r.objective, expected);
    assert_eq!(expected, -9.0);
}

#[test]
fn fractional_knapsack_needs_branching() {
    // The relaxation takes 2/3 of the heavy item.
    let mut lp = SparseLinearProgram::new();
    let a = lp.add_var(-10.0, 0.0, 1.0);
    let b = lp.add_var(-6.0, 0.0, 1.0);
    let c = lp.add_var(-5.0, 0.0, 1.0);
    lp.add_row(Sense::Le, 7.0, &[(a, 6.0), (b, 4.0), (c, 3.0)]);
    let r = solve_milp(&MilpProblem::all_integer(lp.clone()), MilpLimits::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert_eq!(Some(r.objective), enumerate(&lp));
    assert!(r.stats.nodes > 1);
    assert_eq!(r.gap(), 0.0);
}

fn random_milp(rng: &mut ChaCha8Rng) -> SparseLinearProgram {
    let n = rng.random_range(2..5);
    let mut lp = SparseLinearProgram::new();
    for _ in 0..n {
        lp.add_var(rng.random_range(-6..6) as f64, 0.0, rng.random_range(1..4) as f64);
    }
    for _ in 0..rng.random_range(1..4) {
        let mut coefs = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.7) {
                coefs.push((j, rng.random_range(-4..6) as f64 + 0.5 * rng.random_range(0..2) as f64));
            }
        }
        let sense = match rng.random_range(0..6) {
            0 => Sense::Eq,
            1 => Sense::Ge,
            _ => Sense::Le,
        };
        lp.add_row(sense, rng.random_range(0..9) as f64 + 0.5 * rng.random_range(0..2) as f64, &coefs);
    }
    lp
}

#[test]
fn random_pure_integer_programs_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut feasible = 0;
    for round in 0..400 {
        let lp = random_milp(&mut rng);
        let r = solve_milp(&MilpProblem::all_integer(lp.clone()), MilpLimits::default()).unwrap();
        match enumerate(&lp) {
            None => assert_eq!(r.status, Status::Infeasible, "round {round}: {lp:?}"),
            Some(best) => {
                feasible += 1;
                assert_eq!(r.status, Status::Optimal, "round {round}: {lp:?}");
                let x = r.values.as_ref().unwrap();
                assert!(x.iter().all(|v| v.fract() == 0.0));
                assert!(lp.max_violation(x) <= 1e-7);
                assert!((r.objective - best).abs() < 1e-9, "round {round}: {} vs {best}", r.objective);
                assert!((lp.evaluate(x) - r.objective).abs() <= 1e-6 * r.objective.abs().max(1.0));
            }
        }
        for w in r.stats.incumbent_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for w in r.stats.bound_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }
    assert!(feasible > 150);
}

#[test]
fn empty_integer_set_equals_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..100 {
        let lp = random_milp(&mut rng);
        let a = solve_lp(&lp).unwrap();
        let b = solve_milp(&MilpProblem::new(lp, Vec::new()), MilpLimits::default()).unwrap();
        assert_eq!(a.status, b.status);
        if a.status == Status::Optimal {
            assert!((a.objective - b.objective).abs() <= 1e-9);
        }
    }
}

#[test]
fn node_budget_reports_limit_and_gap() {
    // Equality knapsack with no integer solution hidden behind many nodes.
    let mut lp = SparseLinearProgram::new();
    let vars: Vec<usize> = (0..12).map(|_| lp.add_var(1.0, 0.0, 1.0)).collect();
    let coefs: Vec<(usize, f64)> = vars.iter().map(|&j| (j, 2.0)).collect();
    lp.add_row(Sense::Eq, 11.0, &coefs);
    let limits = MilpLimits {
        max_nodes: 5,
        time_limit: Duration::from_secs(10),
    };
    let r = solve_milp(&MilpProblem::all_integer(lp), limits).unwrap();
    assert_eq!(r.status, Status::LimitReached);
    assert!(r.values.is_none());
    assert_eq!(r.stats.nodes, 5);
    assert!(r.lower_bound.is_finite());
}

#[test]
fn limit_with_incumbent_keeps_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    // Many-item knapsack; after a few nodes some incumbent usually exists.
    let mut lp = SparseLinearProgram::new();
    let mut row = Vec::new();
    for _ in 0..30 {
        let j = lp.add_var(-(rng.random_range(5..40) as f64), 0.0, 1.0);
        row.push((j, rng.random_range(3..30) as f64));
    }
    lp.add_row(Sense::Le, 100.0, &row);
    let full = solve_milp(&MilpProblem::all_integer(lp.clone()), MilpLimits::default()).unwrap();
    assert_eq!(full.status, Status::Optimal);
    let limits = MilpLimits {
        max_nodes: 40,
        time_limit: Duration::from_secs(10),
    };
    let r = solve_milp(&MilpProblem::all_integer(lp.clone()), limits).unwrap();
    if r.status == Status::LimitReached && r.values.is_some() {
        assert!(r.objective >= full.objective - 1e-9);
        assert!(r.lower_bound <= full.objective + 1e-9);
        assert!(r.gap() >= 0.0);
    } else {
        assert_eq!(r.status, Status::Optimal);
    }
}

#[test]
fn mixed_integer_program() {
    // min -x - y, with x integer, y continuous; 2x + 2y <= 5, x - y <= 0.5.
    let mut lp = SparseLinearProgram::new();
    let x = lp.add_var(-1.0, 0.0, 10.0);
    let y = lp.add_var(-1.0, 0.0, 10.0);
    lp.add_row(Sense::Le, 5.0, &[(x, 2.0), (y, 2.0)]);
    lp.add_row(Sense::Le, 0.5, &[(x, 1.0), (y, -1.0)]);
    let r = solve_milp(&MilpProblem::new(lp, vec![x]), MilpLimits::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    let v = r.values.unwrap();
    assert!((r.objective + 2.5).abs() < 1e-9);
    assert_eq!(v[x].fract(), 0.0);
}
