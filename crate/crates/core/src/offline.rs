//! Offline rebalancing with free starting positions, and fleet sizing.
//!
//! The problem is a min-cost flow on the time-expanded network: one node per
//! `(region, step)`, passenger arcs pinned to the demand, movement arcs (idle
//! self-arcs included) free, a super source seeding step 1 and a super sink
//! collecting everything that arrives after the horizon.

use std::collections::BTreeMap;

use amod_opt::flow::INFINITE;
use amod_opt::{solve_min_cost_flow, FlowNetwork, FlowResult, Sense, SparseLinearProgram, Status};

use crate::error::{Error, Result};
use crate::model::{validate, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcKind {
    /// Unused vehicles go straight from source to sink.
    Bypass,
    Seed { region: usize },
    Passenger { i: usize, j: usize, t: usize },
    /// Rebalancing, or idling when `i == j`.
    Move { i: usize, j: usize, t: usize },
}

#[derive(Debug, Clone)]
pub struct OfflineNetwork {
    pub net: FlowNetwork,
    pub kinds: Vec<ArcKind>,
    pub source: usize,
    pub sink: usize,
    pub num_regions: usize,
    pub horizon: usize,
}

impl OfflineNetwork {
    /// Grid node for region `i` at step `t`, or the sink past the horizon.
    pub fn node(&self, i: usize, t: usize) -> usize {
        grid_node(self.num_regions, self.horizon, i, t)
    }

    pub fn num_grid_nodes(&self) -> usize {
        self.num_regions * self.horizon
    }

    pub fn num_movement_arcs(&self) -> usize {
        self.kinds.iter().filter(|k| matches!(k, ArcKind::Move { .. })).count()
    }
}

fn grid_node(n: usize, horizon: usize, i: usize, t: usize) -> usize {
    if t > horizon {
        n * horizon + 1
    } else {
        (t - 1) * n + i
    }
}

pub fn build_time_expanded_network(scenario: &Scenario) -> Result<OfflineNetwork> {
    check(scenario)?;
    let n = scenario.num_regions();
    let horizon = scenario.grid.horizon;
    let customers = i64::try_from(scenario.demand.total()).map_err(|_| Error::input("demand total overflows"))?;
    let source = n * horizon;
    let sink = source + 1;
    let mut net = FlowNetwork::new(n * horizon + 2);
    net.supply[source] = customers;
    net.supply[sink] = -customers;
    let mut kinds = Vec::new();

    net.add_arc(source, sink, 0, customers, 0.0);
    kinds.push(ArcKind::Bypass);
    for i in 0..n {
        net.add_arc(source, grid_node(n, horizon, i, 1), 0, customers, 0.0);
        kinds.push(ArcKind::Seed { region: i });
    }
    for (i, j, t, count) in scenario.demand.iter() {
        let head = grid_node(n, horizon, j, t + scenario.travel.tau(i, j, t));
        let c = count as i64;
        net.add_arc(grid_node(n, horizon, i, t), head, c, c, 0.0);
        kinds.push(ArcKind::Passenger { i, j, t });
    }
    for t in 1..=horizon {
        for i in 0..n {
            for j in 0..n {
                let head = grid_node(n, horizon, j, t + scenario.travel.tau(i, j, t));
                net.add_arc(grid_node(n, horizon, i, t), head, 0, INFINITE, scenario.costs.reb(i, j, t));
                kinds.push(ArcKind::Move { i, j, t });
            }
        }
    }
    Ok(OfflineNetwork {
        net,
        kinds,
        source,
        sink,
        num_regions: n,
        horizon,
    })
}

fn check(scenario: &Scenario) -> Result<()> {
    let problems = validate(scenario);
    if problems.is_empty() {
        Ok(())
    } else {
        let text: Vec<String> = problems.iter().map(|v| v.to_string()).collect();
        Err(Error::input(format!("invalid scenario: {}", text.join("; "))))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RebalancingPlan {
    pub num_regions: usize,
    pub horizon: usize,
    /// Passenger flows keyed by `(i, j, t)`.
    pub x_p: BTreeMap<(usize, usize, usize), u64>,
    /// Rebalancing flows keyed by `(i, j, t)`; `i == j` is idling.
    pub x_r: BTreeMap<(usize, usize, usize), u64>,
    /// Vehicles placed in each region at step 1.
    pub seed: Vec<u64>,
    pub fleet_size: u64,
    /// Total rebalancing and idling cost.
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PlanKind {
    Passenger,
    Rebalance,
    Idle,
    Seed,
    Wait,
    Drop,
}

impl PlanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanKind::Passenger => "passenger",
            PlanKind::Rebalance => "rebalance",
            PlanKind::Idle => "idle",
            PlanKind::Seed => "seed",
            PlanKind::Wait => "wait",
            PlanKind::Drop => "drop",
        }
    }
}

/// One line of a plan export. Seeds use `i == j` and `t == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanRow {
    pub i: usize,
    pub j: usize,
    pub t: usize,
    pub kind: PlanKind,
    pub count: u64,
}

impl RebalancingPlan {
    pub fn rows(&self) -> Vec<PlanRow> {
        let mut out = Vec::new();
        for (i, &count) in self.seed.iter().enumerate() {
            if count > 0 {
                out.push(PlanRow { i, j: i, t: 1, kind: PlanKind::Seed, count });
            }
        }
        for (&(i, j, t), &count) in &self.x_p {
            out.push(PlanRow { i, j, t, kind: PlanKind::Passenger, count });
        }
        for (&(i, j, t), &count) in &self.x_r {
            let kind = if i == j { PlanKind::Idle } else { PlanKind::Rebalance };
            out.push(PlanRow { i, j, t, kind, count });
        }
        out
    }

    /// `Σ c^r x^r` recomputed from the flows.
    pub fn recompute_objective(&self, scenario: &Scenario) -> f64 {
        self.x_r
            .iter()
            .map(|(&(i, j, t), &c)| scenario.costs.reb(i, j, t) * c as f64)
            .sum()
    }

    /// Departures minus arrivals minus seeds at every `(i, t)`, indexed
    /// `(t-1)·N + i`. All zero for a valid plan.
    pub fn conservation_residuals(&self, scenario: &Scenario) -> Vec<i64> {
        let n = self.num_regions;
        let mut r = vec![0i64; n * self.horizon];
        for flows in [&self.x_p, &self.x_r] {
            for (&(i, j, t), &c) in flows {
                r[(t - 1) * n + i] += c as i64;
                let arrive = t + scenario.travel.tau(i, j, t);
                if arrive <= self.horizon {
                    r[(arrive - 1) * n + j] -= c as i64;
                }
            }
        }
        for (i, &s) in self.seed.iter().enumerate() {
            r[i] -= s as i64;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Priority {
    CostThenFleet,
    FleetThenCost,
}

/// Minimum-cost plan; among cost-optimal plans, the one with fewest vehicles.
pub fn solve_offline(scenario: &Scenario) -> Result<RebalancingPlan> {
    solve_lexicographic(scenario, Priority::CostThenFleet)
}

/// Fewest vehicles that serve every customer with no waiting.
pub fn fleet_size(scenario: &Scenario) -> Result<u64> {
    Ok(min_fleet_plan(scenario)?.fleet_size)
}

/// Minimum-fleet plan; among those, the cheapest.
pub fn min_fleet_plan(scenario: &Scenario) -> Result<RebalancingPlan> {
    solve_lexicographic(scenario, Priority::FleetThenCost)
}

fn solve_lexicographic(scenario: &Scenario, priority: Priority) -> Result<RebalancingPlan> {
    let built = build_time_expanded_network(scenario)?;
    // Vehicle count as an objective: one unit per seeded vehicle.
    let mut fleet_net = built.net.clone();
    for (arc, kind) in fleet_net.arcs.iter_mut().zip(&built.kinds) {
        arc.cost = if matches!(kind, ArcKind::Seed { .. }) { 1.0 } else { 0.0 };
    }
    let (primary, mut secondary) = match priority {
        Priority::CostThenFleet => (built.net.clone(), fleet_net),
        Priority::FleetThenCost => (fleet_net, built.net.clone()),
    };

    let first = solve_flow(&primary)?;
    // Any flow that keeps arcs with nonzero reduced cost where they are is
    // optimal for the first objective (complementary slackness against the
    // first pass's potentials), so the second pass searches only that face.
    let scale = primary.arcs.iter().fold(1.0f64, |m, a| m.max(a.cost.abs()));
    let eps = 1e-9 * scale;
    for (k, arc) in secondary.arcs.iter_mut().enumerate() {
        if first.reduced_cost(&primary.arcs[k]).abs() > eps {
            arc.lower = first.flows[k];
            arc.upper = first.flows[k];
        }
    }
    let second = solve_flow(&secondary)?;
    Ok(extract_plan(scenario, &built, &second.flows))
}

fn solve_flow(net: &FlowNetwork) -> Result<FlowResult> {
    let r = solve_min_cost_flow(net)?;
    match r.status {
        Status::Optimal => Ok(r),
        other => Err(Error::input(format!("time-expanded network solve ended {other}"))),
    }
}

fn extract_plan(scenario: &Scenario, built: &OfflineNetwork, flows: &[i64]) -> RebalancingPlan {
    let n = built.num_regions;
    let mut plan = RebalancingPlan {
        num_regions: n,
        horizon: built.horizon,
        x_p: BTreeMap::new(),
        x_r: BTreeMap::new(),
        seed: vec![0; n],
        fleet_size: 0,
        objective: 0.0,
    };
    for (kind, &f) in built.kinds.iter().zip(flows) {
        if f <= 0 {
            continue;
        }
        let f = f as u64;
        match *kind {
            ArcKind::Bypass => {}
            ArcKind::Seed { region } => plan.seed[region] += f,
            ArcKind::Passenger { i, j, t } => *plan.x_p.entry((i, j, t)).or_insert(0) += f,
            ArcKind::Move { i, j, t } => *plan.x_r.entry((i, j, t)).or_insert(0) += f,
        }
    }
    plan.fleet_size = plan.seed.iter().sum();
    plan.objective = plan.recompute_objective(scenario);
    plan
}

/// Column layout of [`build_offline_lp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfflineColumn {
    Passenger { i: usize, j: usize, t: usize },
    Rebalance { i: usize, j: usize, t: usize },
    Seed { i: usize, t: usize },
}

/// The offline problem written as a plain LP with integrality dropped: every
/// `x^p_ijt`, `x^r_ijt` and `s_it`, passenger rows `x^p = λ`, conservation
/// rows, and `s_it = 0` for `t > 1`.
pub fn build_offline_lp(scenario: &Scenario) -> Result<(SparseLinearProgram, Vec<OfflineColumn>)> {
    check(scenario)?;
    let n = scenario.num_regions();
    let horizon = scenario.grid.horizon;
    let mut lp = SparseLinearProgram::new();
    let mut cols = Vec::new();
    let mut flow_cols = Vec::new();
    for t in 1..=horizon {
        for i in 0..n {
            for j in 0..n {
                let p = lp.add_named_var(format!("xp_{i}_{j}_{t}"), 0.0, 0.0, f64::INFINITY);
                cols.push(OfflineColumn::Passenger { i, j, t });
                let r = lp.add_named_var(format!("xr_{i}_{j}_{t}"), scenario.costs.reb(i, j, t), 0.0, f64::INFINITY);
                cols.push(OfflineColumn::Rebalance { i, j, t });
                flow_cols.push((i, j, t, p, r));
            }
        }
    }
    let mut seed_col = vec![0; n * horizon];
    for t in 1..=horizon {
        for i in 0..n {
            seed_col[(t - 1) * n + i] = lp.add_named_var(format!("s_{i}_{t}"), 0.0, 0.0, f64::INFINITY);
            cols.push(OfflineColumn::Seed { i, t });
        }
    }

    for &(i, j, t, p, _) in &flow_cols {
        lp.add_named_row(format!("pax_{i}_{j}_{t}"), Sense::Eq, scenario.demand.get(i, j, t) as f64, &[(p, 1.0)]);
    }
    let mut conservation: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n * horizon];
    for &(i, j, t, p, r) in &flow_cols {
        conservation[(t - 1) * n + i].extend([(p, 1.0), (r, 1.0)]);
        let arrive = t + scenario.travel.tau(i, j, t);
        if arrive <= horizon {
            conservation[(arrive - 1) * n + j].extend([(p, -1.0), (r, -1.0)]);
        }
    }
    for (k, mut coefs) in conservation.into_iter().enumerate() {
        coefs.push((seed_col[k], -1.0));
        let (t, i) = (k / n + 1, k % n);
        lp.add_named_row(format!("flow_{i}_{t}"), Sense::Eq, 0.0, &coefs);
    }
    for t in 2..=horizon {
        for i in 0..n {
            lp.add_named_row(format!("start_{i}_{t}"), Sense::Eq, 0.0, &[(seed_col[(t - 1) * n + i], 1.0)]);
        }
    }
    Ok((lp, cols))
}
