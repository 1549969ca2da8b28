//! Network simplex against exhaustive enumeration and LP cross-checks.

use amod_opt::flow::INFINITE;
use amod_opt::{solve_lp, solve_min_cost_flow, FlowNetwork, Sense, SparseLinearProgram, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum cost over every integral flow within the arc bounds, or `None`.
fn brute_force(net: &FlowNetwork) -> Option<f64> {
    let m = net.arcs.len();
    let mut flows: Vec<i64> = net.arcs.iter().map(|a| a.lower).collect();
    let mut best: Option<f64> = None;
    loop {
        if net.max_violation(&flows) == 0 {
            let c = net.cost_of(&flows);
            if best.is_none_or(|b| c < b) {
                best = Some(c);
            }
        }
        let mut k = 0;
        loop {
            if k == m {
                return best;
            }
            if flows[k] < net.arcs[k].upper {
                flows[k] += 1;
                break;
            }
            flows[k] = net.arcs[k].lower;
            k += 1;
        }
    }
}

fn random_small(rng: &mut ChaCha8Rng) -> FlowNetwork {
    let n = rng.random_range(2..5);
    let mut net = FlowNetwork::new(n);
    let arcs = rng.random_range(1..7);
    for _ in 0..arcs {
        let t = rng.random_range(0..n);
        let mut h = rng.random_range(0..n);
        if h == t {
            h = (h + 1) % n;
        }
        let lower = if rng.random_bool(0.2) { 1 } else { 0 };
        let upper = lower + rng.random_range(0..3);
        net.add_arc(t, h, lower, upper, rng.random_range(-4..8) as f64);
    }
    for _ in 0..rng.random_range(0..3) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        net.supply[a] += 1;
        net.supply[b] -= 1;
    }
    net
}

#[test]
fn matches_brute_force_on_tiny_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut feasible, mut infeasible) = (0, 0);
    for _ in 0..600 {
        let net = random_small(&mut rng);
        let r = solve_min_cost_flow(&net).unwrap();
        match brute_force(&net) {
            Some(best) => {
                feasible += 1;
                assert_eq!(r.status, Status::Optimal, "{net:?}");
                assert_eq!(net.max_violation(&r.flows), 0);
                assert!((r.cost - best).abs() < 1e-9, "solver {} oracle {best} on {net:?}", r.cost);
            }
            None => {
                infeasible += 1;
                assert_eq!(r.status, Status::Infeasible, "{net:?}");
                let w = r.witness.expect("witness");
                // Check the cut claim from scratch.
                let inside = |v: usize| w.nodes.contains(&v);
                let supply: i64 = w.nodes.iter().map(|&v| net.supply[v]).sum();
                let mut cap = 0;
                for a in &net.arcs {
                    if inside(a.tail) && !inside(a.head) {
                        cap += a.upper;
                    } else if !inside(a.tail) && inside(a.head) {
                        cap -= a.lower;
                    }
                }
                assert_eq!((supply, cap), (w.supply, w.cut_capacity));
                assert!(supply > cap, "witness does not certify: {w:?} on {net:?}");
            }
        }
    }
    assert!(feasible > 100 && infeasible > 20, "{feasible} feasible, {infeasible} infeasible");
}

#[test]
fn diamond_with_capacities_forces_split() {
    //    1
    //  /   \
    // 0     3
    //  \   /
    //    2
    let mut net = FlowNetwork::new(4);
    net.supply = vec![5, 0, 0, -5];
    net.add_arc(0, 1, 0, 3, 1.0);
    net.add_arc(1, 3, 0, 3, 1.0);
    net.add_arc(0, 2, 0, 4, 2.0);
    net.add_arc(2, 3, 0, 4, 2.0);
    net.add_arc(1, 2, 0, 1, 0.0);
    let r = solve_min_cost_flow(&net).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert_eq!(Some(r.cost), brute_force(&net));
    assert_eq!(r.cost, 14.0);
}

fn random_network(rng: &mut ChaCha8Rng, n: usize, m: usize) -> FlowNetwork {
    let mut net = FlowNetwork::new(n);
    // A cheap-to-ignore spanning cycle keeps most instances feasible.
    for v in 0..n {
        net.add_arc(v, (v + 1) % n, 0, INFINITE, 50.0);
    }
    for _ in 0..m {
        let t = rng.random_range(0..n);
        let h = rng.random_range(0..n);
        if t == h {
            continue;
        }
        let lower = if rng.random_bool(0.1) { rng.random_range(0..3) } else { 0 };
        let upper = if rng.random_bool(0.3) { INFINITE } else { lower + rng.random_range(0..20) };
        net.add_arc(t, h, lower, upper, rng.random_range(0..30) as f64 - 5.0 * (rng.random_bool(0.1) as i32 as f64));
    }
    for _ in 0..n {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let q = rng.random_range(0..10);
        net.supply[a] += q;
        net.supply[b] -= q;
    }
    net
}

fn as_lp(net: &FlowNetwork) -> SparseLinearProgram {
    let mut lp = SparseLinearProgram::new();
    for a in &net.arcs {
        let hi = if a.upper >= INFINITE { f64::INFINITY } else { a.upper as f64 };
        lp.add_var(a.cost, a.lower as f64, hi);
    }
    for v in 0..net.num_nodes() {
        let mut coefs = Vec::new();
        for (k, a) in net.arcs.iter().enumerate() {
            if a.tail == v {
                coefs.push((k, 1.0));
            }
            if a.head == v {
                coefs.push((k, -1.0));
            }
        }
        lp.add_row(Sense::Eq, net.supply[v] as f64, &coefs);
    }
    lp
}

#[test]
fn random_networks_integral_and_complementary() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut optimal = 0;
    for round in 0..150 {
        let n = rng.random_range(3..40);
        let net = random_network(&mut rng, n, 4 * n);
        let r = solve_min_cost_flow(&net).unwrap();
        let lp = solve_lp(&as_lp(&net)).unwrap();
        assert_eq!(r.status, lp.status, "round {round}");
        if r.status != Status::Optimal {
            continue;
        }
        optimal += 1;
        assert_eq!(net.max_violation(&r.flows), 0);
        assert!((r.cost - lp.objective).abs() <= 1e-6 * lp.objective.abs().max(1.0));
        for (a, &f) in net.arcs.iter().zip(&r.flows) {
            let rc = r.reduced_cost(a);
            if f < a.upper {
                assert!(rc >= -1e-7, "round {round}: arc below upper with rc {rc}");
            }
            if f > a.lower {
                assert!(rc <= 1e-7, "round {round}: arc above lower with rc {rc}");
            }
        }
    }
    assert!(optimal >= 100, "only {optimal} optimal instances");
}

#[test]
fn transportation_problem_matches_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (s, d) = (12, 15);
    let mut net = FlowNetwork::new(s + d);
    let mut left = 0;
    for i in 0..s {
        let q = rng.random_range(0..30);
        net.supply[i] = q;
        left += q;
    }
    for j in 0..d {
        let q = if j + 1 == d { left } else { rng.random_range(0..=left.min(25)) };
        net.supply[s + j] = -q;
        left -= q;
    }
    for i in 0..s {
        for j in 0..d {
            net.add_arc(i, s + j, 0, INFINITE, rng.random_range(1..100) as f64);
        }
    }
    let r = solve_min_cost_flow(&net).unwrap();
    let lp = solve_lp(&as_lp(&net)).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!((r.cost - lp.objective).abs() < 1e-6);
}

#[test]
fn large_sparse_network_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let net = random_network(&mut rng, 3000, 20_000);
    let r = solve_min_cost_flow(&net).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert_eq!(net.max_violation(&r.flows), 0);
}
