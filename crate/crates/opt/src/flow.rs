//! Primal network simplex for integral min-cost flow.
//!
//! Arc flows are `i64`, costs are `f64`. The starting tree hangs every node
//! off an artificial root through big-M arcs, and the leaving arc is picked by
//! the strongly feasible rule, which rules out cycling without perturbation.
//! On an infeasible network the solver reports a node set whose supply
//! exceeds what its cut can carry.

use std::time::Instant;

use crate::{tol, OptError, SolveResult, SolveStats, Status};

/// Stands in for an uncapacitated arc.
pub const INFINITE: i64 = i64::MAX / 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowArc {
    pub tail: usize,
    pub head: usize,
    pub lower: i64,
    /// Use [`INFINITE`] for no upper bound.
    pub upper: i64,
    pub cost: f64,
}

/// `supply[v] > 0` is a source, `< 0` a sink. Supplies must sum to zero.
#[derive(Debug, Clone, Default)]
pub struct FlowNetwork {
    pub supply: Vec<i64>,
    pub arcs: Vec<FlowArc>,
}

/// A node set `S` with `supply > cut_capacity`, where `supply` is the net
/// supply of `S` and `cut_capacity` is the upper bound total on arcs leaving
/// `S` minus the lower bound total on arcs entering it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfeasibilityWitness {
    pub nodes: Vec<usize>,
    pub supply: i64,
    pub cut_capacity: i64,
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub status: Status,
    pub cost: f64,
    /// Flow per arc; empty unless optimal.
    pub flows: Vec<i64>,
    /// Node duals `y`. Reduced cost of an arc is `cost - y[tail] + y[head]`.
    pub potentials: Vec<f64>,
    pub witness: Option<InfeasibilityWitness>,
    pub stats: SolveStats,
}

impl FlowResult {
    pub fn reduced_cost(&self, arc: &FlowArc) -> f64 {
        arc.cost - self.potentials[arc.tail] + self.potentials[arc.head]
    }

    /// Generic view with flows as `f64` values and potentials as duals.
    pub fn into_solve_result(self) -> SolveResult {
        if self.status != Status::Optimal {
            return SolveResult::without_solution(self.status, self.stats);
        }
        SolveResult {
            status: self.status,
            objective: self.cost,
            values: Some(self.flows.iter().map(|&f| f as f64).collect()),
            lower_bound: self.cost,
            duals: Some(self.potentials),
            basis: None,
            stats: self.stats,
        }
    }
}

impl FlowNetwork {
    pub fn new(num_nodes: usize) -> Self {
        FlowNetwork {
            supply: vec![0; num_nodes],
            arcs: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.supply.len()
    }

    pub fn add_node(&mut self, supply: i64) -> usize {
        self.supply.push(supply);
        self.supply.len() - 1
    }

    pub fn add_arc(&mut self, tail: usize, head: usize, lower: i64, upper: i64, cost: f64) -> usize {
        self.arcs.push(FlowArc {
            tail,
            head,
            lower,
            upper,
            cost,
        });
        self.arcs.len() - 1
    }

    pub fn validate(&self) -> Result<(), OptError> {
        let n = self.num_nodes();
        for (k, a) in self.arcs.iter().enumerate() {
            if a.tail >= n || a.head >= n {
                return Err(OptError::Malformed(format!("arc {k} references a node outside 0..{n}")));
            }
            if a.lower < 0 || a.lower > a.upper || a.upper > INFINITE {
                return Err(OptError::Malformed(format!(
                    "arc {k} has bounds [{}, {}]",
                    a.lower, a.upper
                )));
            }
            if !a.cost.is_finite() {
                return Err(OptError::Malformed(format!("arc {k} has cost {}", a.cost)));
            }
        }
        if self.supply.iter().any(|s| s.abs() >= INFINITE) {
            return Err(OptError::Malformed("supply magnitude too large".into()));
        }
        let total: i64 = self.supply.iter().sum();
        if total != 0 {
            return Err(OptError::Malformed(format!("supplies sum to {total}, not 0")));
        }
        Ok(())
    }

    /// Objective of a flow vector.
    pub fn cost_of(&self, flows: &[i64]) -> f64 {
        self.arcs.iter().zip(flows).map(|(a, &f)| a.cost * f as f64).sum()
    }

    /// Largest violation of bounds or node balance by `flows`.
    pub fn max_violation(&self, flows: &[i64]) -> i64 {
        let mut balance = self.supply.clone();
        let mut worst = 0;
        for (a, &f) in self.arcs.iter().zip(flows) {
            worst = worst.max(a.lower - f).max(f - a.upper);
            balance[a.tail] -= f;
            balance[a.head] += f;
        }
        balance.iter().fold(worst, |w, b| w.max(b.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArcState {
    Tree,
    Lower,
    Upper,
}

/// Whether a node's tree arc points toward its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Up,
    Down,
}

struct Solver {
    n: usize,
    root: usize,
    tail: Vec<usize>,
    head: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<f64>,
    flow: Vec<i64>,
    state: Vec<ArcState>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    dir: Vec<Dir>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    pi: Vec<f64>,
    eps: f64,
    block: usize,
    cursor: usize,
}

pub fn solve_min_cost_flow(net: &FlowNetwork) -> Result<FlowResult, OptError> {
    net.validate()?;
    let started = Instant::now();
    let n = net.num_nodes();
    let m = net.arcs.len();
    let root = n;

    let mut b = net.supply.clone();
    let mut tail = Vec::with_capacity(m + n);
    let mut head = Vec::with_capacity(m + n);
    let mut cap = Vec::with_capacity(m + n);
    let mut cost = Vec::with_capacity(m + n);
    let mut max_cost: f64 = 0.0;
    for a in &net.arcs {
        tail.push(a.tail);
        head.push(a.head);
        cap.push(if a.upper >= INFINITE { INFINITE } else { a.upper - a.lower });
        cost.push(a.cost);
        max_cost = max_cost.max(a.cost.abs());
        b[a.tail] -= a.lower;
        b[a.head] += a.lower;
    }
    let art_cost = (max_cost + 1.0) * (n as f64 + 1.0);
    let mut flow = vec![0i64; m + n];
    let mut state = vec![ArcState::Lower; m + n];
    let parent = vec![root; n + 1];
    let mut pred = vec![usize::MAX; n + 1];
    let mut dir = vec![Dir::Up; n + 1];
    let mut depth = vec![1usize; n + 1];
    let mut pi = vec![0.0; n + 1];
    depth[root] = 0;
    for v in 0..n {
        let k = m + v;
        if b[v] >= 0 {
            tail.push(v);
            head.push(root);
            flow[k] = b[v];
            dir[v] = Dir::Up;
            pi[v] = art_cost;
        } else {
            tail.push(root);
            head.push(v);
            flow[k] = -b[v];
            dir[v] = Dir::Down;
            pi[v] = -art_cost;
        }
        cap.push(INFINITE);
        cost.push(art_cost);
        state[k] = ArcState::Tree;
        pred[v] = k;
    }
    let mut children = vec![Vec::new(); n + 1];
    children[root] = (0..n).collect();

    let total = m + n;
    let mut s = Solver {
        n,
        root,
        tail,
        head,
        cap,
        cost,
        flow,
        state,
        parent,
        pred,
        dir,
        depth,
        children,
        pi,
        eps: tol::OPTIMALITY * max_cost.max(1.0),
        block: ((total as f64).sqrt().ceil() as usize).max(10),
        cursor: 0,
    };

    let mut stats = SolveStats::default();
    let status = loop {
        let Some(entering) = s.find_entering() else {
            break Status::Optimal;
        };
        stats.iterations += 1;
        if !s.pivot(entering) {
            break Status::Unbounded;
        }
    };
    stats.wall_time = started.elapsed();

    if status == Status::Unbounded {
        return Ok(FlowResult {
            status,
            cost: f64::NEG_INFINITY,
            flows: Vec::new(),
            potentials: Vec::new(),
            witness: None,
            stats,
        });
    }
    if (m..m + n).any(|k| s.flow[k] > 0) {
        let witness = s.witness(net, m);
        return Ok(FlowResult {
            status: Status::Infeasible,
            cost: f64::NAN,
            flows: Vec::new(),
            potentials: Vec::new(),
            witness: Some(witness),
            stats,
        });
    }
    let flows: Vec<i64> = net.arcs.iter().enumerate().map(|(k, a)| s.flow[k] + a.lower).collect();
    // Shift so the duals do not carry the artificial offset.
    let shift = s.pi[..n].iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if shift.is_finite() { shift } else { 0.0 };
    let potentials = s.pi[..n].iter().map(|p| p - shift).collect();
    Ok(FlowResult {
        status: Status::Optimal,
        cost: net.cost_of(&flows),
        flows,
        potentials,
        witness: None,
        stats,
    })
}

impl Solver {
    fn reduced(&self, k: usize) -> f64 {
        self.cost[k] - self.pi[self.tail[k]] + self.pi[self.head[k]]
    }

    /// Block pricing: scan a block at a time, take the most violating arc of
    /// the first block that has any.
    fn find_entering(&mut self) -> Option<usize> {
        let total = self.cost.len();
        if total == 0 {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut scanned = 0;
        let mut k = self.cursor;
        while scanned < total {
            let violation = match self.state[k] {
                ArcState::Lower => -self.reduced(k),
                ArcState::Upper => self.reduced(k),
                ArcState::Tree => 0.0,
            };
            if violation > self.eps && best.is_none_or(|(_, v)| violation > v) {
                best = Some((k, violation));
            }
            scanned += 1;
            k += 1;
            if k == total {
                k = 0;
            }
            if scanned % self.block == 0 && best.is_some() {
                break;
            }
        }
        self.cursor = k;
        best.map(|(k, _)| k)
    }

    fn join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] > self.depth[v] {
                u = self.parent[u];
            } else if self.depth[v] > self.depth[u] {
                v = self.parent[v];
            } else {
                u = self.parent[u];
                v = self.parent[v];
            }
        }
        u
    }

    /// Returns false when the cycle has unbounded capacity.
    fn pivot(&mut self, k: usize) -> bool {
        let (first, second) = if self.state[k] == ArcState::Lower {
            (self.tail[k], self.head[k])
        } else {
            (self.head[k], self.tail[k])
        };
        let join = self.join(first, second);
        let mut delta = self.cap[k];
        let mut leaving: Option<(usize, u8)> = None;

        let mut u = first;
        while u != join {
            let e = self.pred[u];
            let d = match self.dir[u] {
                Dir::Up => self.flow[e],
                Dir::Down => residual(self.cap[e], self.flow[e]),
            };
            if d < delta {
                delta = d;
                leaving = Some((u, 1));
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            let e = self.pred[u];
            let d = match self.dir[u] {
                Dir::Up => residual(self.cap[e], self.flow[e]),
                Dir::Down => self.flow[e],
            };
            if d <= delta {
                delta = d;
                leaving = Some((u, 2));
            }
            u = self.parent[u];
        }
        if delta >= INFINITE {
            return false;
        }

        if delta > 0 {
            if self.state[k] == ArcState::Lower {
                self.flow[k] += delta;
            } else {
                self.flow[k] -= delta;
            }
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                match self.dir[u] {
                    Dir::Up => self.flow[e] -= delta,
                    Dir::Down => self.flow[e] += delta,
                }
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                let e = self.pred[u];
                match self.dir[u] {
                    Dir::Up => self.flow[e] += delta,
                    Dir::Down => self.flow[e] -= delta,
                }
                u = self.parent[u];
            }
        }

        let Some((u_out, side)) = leaving else {
            self.state[k] = if self.state[k] == ArcState::Lower {
                ArcState::Upper
            } else {
                ArcState::Lower
            };
            return true;
        };
        let out_arc = self.pred[u_out];
        self.state[out_arc] = if self.flow[out_arc] == 0 {
            ArcState::Lower
        } else {
            ArcState::Upper
        };
        self.state[k] = ArcState::Tree;
        let (u_in, v_in) = if side == 1 { (first, second) } else { (second, first) };

        // Reverse the tree path u_in .. u_out and hang it under v_in.
        let mut prev = v_in;
        let mut prev_arc = k;
        let mut cur = u_in;
        loop {
            let old_parent = self.parent[cur];
            let old_arc = self.pred[cur];
            detach(&mut self.children[old_parent], cur);
            self.children[prev].push(cur);
            self.parent[cur] = prev;
            self.pred[cur] = prev_arc;
            self.dir[cur] = if self.tail[prev_arc] == cur { Dir::Up } else { Dir::Down };
            if cur == u_out {
                break;
            }
            prev = cur;
            prev_arc = old_arc;
            cur = old_parent;
        }
        self.refresh_subtree(u_in);
        true
    }

    fn refresh_subtree(&mut self, top: usize) {
        let mut stack = vec![top];
        while let Some(v) = stack.pop() {
            let p = self.parent[v];
            let e = self.pred[v];
            self.depth[v] = self.depth[p] + 1;
            self.pi[v] = match self.dir[v] {
                Dir::Up => self.cost[e] + self.pi[p],
                Dir::Down => self.pi[p] - self.cost[e],
            };
            stack.extend_from_slice(&self.children[v]);
        }
    }

    fn witness(&self, net: &FlowNetwork, m: usize) -> InfeasibilityWitness {
        let n = self.n;
        let mut out_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut in_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for k in 0..m {
            out_adj[self.tail[k]].push(k);
            in_adj[self.head[k]].push(k);
        }
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = (0..n)
            .filter(|&v| self.tail[m + v] == v && self.flow[m + v] > 0)
            .collect();
        for &v in &stack {
            seen[v] = true;
        }
        while let Some(v) = stack.pop() {
            for &k in &out_adj[v] {
                let w = self.head[k];
                if !seen[w] && self.flow[k] < self.cap[k] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
            for &k in &in_adj[v] {
                let w = self.tail[k];
                if !seen[w] && self.flow[k] > 0 {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        let nodes: Vec<usize> = (0..n).filter(|&v| seen[v]).collect();
        let supply = nodes.iter().map(|&v| net.supply[v]).sum();
        let mut cut_capacity: i64 = 0;
        for a in &net.arcs {
            if seen[a.tail] && !seen[a.head] {
                cut_capacity = cut_capacity.saturating_add(a.upper);
            } else if !seen[a.tail] && seen[a.head] {
                cut_capacity -= a.lower;
            }
        }
        debug_assert!(self.root == n);
        InfeasibilityWitness {
            nodes,
            supply,
            cut_capacity: cut_capacity.min(INFINITE),
        }
    }
}

fn residual(cap: i64, flow: i64) -> i64 {
    if cap >= INFINITE {
        INFINITE
    } else {
        cap - flow
    }
}

fn detach(list: &mut Vec<usize>, v: usize) {
    if let Some(pos) = list.iter().position(|&x| x == v) {
        list.swap_remove(pos);
    }
}
