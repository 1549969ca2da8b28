//! Receding-horizon controller core: state observation, the integer program
//! over the planning horizon, and extraction of first-interval tasks.
//!
//! Relative step `k` of a problem built at epoch `t0` is absolute step
//! `t0 + k`. Vehicles must leave every `(i, k)` node (idling counts), so the
//! conservation rows pin the total fleet; `w` schedules pickups of customers
//! already waiting and `d` drops predicted demand.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use amod_opt::{
    solve_lp_warm, solve_milp, Basis, BasisState, LpOptions, MilpLimits, MilpProblem, Sense, SparseLinearProgram,
    Status,
};

use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::model::Scenario;
use crate::offline::{PlanKind, PlanRow};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateObservation {
    /// Completed steps at the time of observation.
    pub t0: usize,
    /// Idle vehicles per region.
    pub idle: Vec<u32>,
    /// `inbound[i][k-1]`: vehicles arriving at `i` during relative step `k`.
    pub inbound: Vec<Vec<u32>>,
    /// Waiting customers per `(origin, destination)`.
    pub outstanding: BTreeMap<(usize, usize), u32>,
}

impl StateObservation {
    pub fn new(num_regions: usize, horizon: usize, t0: usize) -> Self {
        StateObservation {
            t0,
            idle: vec![0; num_regions],
            inbound: vec![vec![0; horizon]; num_regions],
            outstanding: BTreeMap::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.inbound.first().map_or(0, |v| v.len())
    }

    /// Relative step in which a vehicle `remaining_ticks` from arrival
    /// becomes available, or `None` past the horizon.
    pub fn arrival_step(&self, remaining_ticks: u64, ticks_per_step: u32) -> Option<usize> {
        let k = (remaining_ticks / ticks_per_step as u64) as usize + 1;
        (k <= self.horizon()).then_some(k)
    }

    /// Records a vehicle en route to `region`; ignored past the horizon.
    pub fn add_inbound(&mut self, region: usize, remaining_ticks: u64, ticks_per_step: u32) {
        if let Some(k) = self.arrival_step(remaining_ticks, ticks_per_step) {
            self.inbound[region][k - 1] += 1;
        }
    }

    /// Vehicles that become available at `(i, k)`.
    pub fn supply(&self, i: usize, k: usize) -> u32 {
        let base = if k == 1 { self.idle[i] } else { 0 };
        base + self.inbound[i][k - 1]
    }

    pub fn vehicles(&self) -> u64 {
        let idle: u64 = self.idle.iter().map(|&a| a as u64).sum();
        let moving: u64 = self.inbound.iter().flatten().map(|&v| v as u64).sum();
        idle + moving
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MpcSettings {
    /// Planning horizon `T` in steps.
    pub horizon: usize,
    pub limits: MilpLimits,
    /// Instantiate `x^p`, `w`, `d` only where demand or waiting customers exist.
    pub prune: bool,
    /// Accept the rounded-relaxation fallback when no integral plan is found
    /// within budget; otherwise such an epoch is a budget error.
    pub allow_fallback: bool,
}

impl Default for MpcSettings {
    fn default() -> Self {
        MpcSettings {
            horizon: 50,
            limits: MilpLimits::default(),
            prune: true,
            allow_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpcColumn {
    Passenger { i: usize, j: usize, t: usize },
    Rebalance { i: usize, j: usize, t: usize },
    Wait { i: usize, j: usize, t: usize },
    Drop { i: usize, j: usize, t: usize },
}

#[derive(Debug, Clone)]
pub struct MpcProblem {
    pub milp: MilpProblem,
    pub columns: Vec<MpcColumn>,
    pub num_regions: usize,
    pub horizon: usize,
    pub t0: usize,
    /// `s_ik` indexed `(k-1)·N + i`.
    pub supply: Vec<u32>,
}

impl MpcProblem {
    pub fn num_vars(&self) -> usize {
        self.milp.lp.num_vars()
    }

    pub fn num_rows(&self) -> usize {
        self.milp.lp.num_rows()
    }
}

pub fn build_mpc_problem(
    obs: &StateObservation,
    fc: &Forecast,
    scenario: &Scenario,
    settings: &MpcSettings,
) -> Result<MpcProblem> {
    let n = scenario.num_regions();
    let horizon = settings.horizon;
    if horizon == 0 {
        return Err(Error::input("planning horizon must be at least 1"));
    }
    if obs.idle.len() != n || obs.inbound.len() != n || obs.inbound.iter().any(|v| v.len() != horizon) {
        return Err(Error::input(format!(
            "observation dimensions do not match {n} regions and horizon {horizon}"
        )));
    }
    if fc.t_forward > horizon {
        return Err(Error::input(format!(
            "forecast horizon {} exceeds planning horizon {horizon}",
            fc.t_forward
        )));
    }
    if fc.iter().any(|(i, j, _, _)| i >= n || j >= n) || obs.outstanding.keys().any(|&(i, j)| i >= n || j >= n) {
        return Err(Error::input("forecast or observation references an unknown region"));
    }

    let t0 = obs.t0;
    let costs = &scenario.costs;
    let outstanding: BTreeMap<(usize, usize), u32> = if settings.prune {
        obs.outstanding.iter().filter(|(_, &c)| c > 0).map(|(&k, &c)| (k, c)).collect()
    } else {
        let mut all = BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                all.insert((i, j), obs.outstanding.get(&(i, j)).copied().unwrap_or(0));
            }
        }
        all
    };
    let mut active: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    if settings.prune {
        active.extend(fc.iter().map(|(i, j, k, _)| (i, j, k)));
        for &(i, j) in outstanding.keys() {
            active.extend((1..=horizon).map(|k| (i, j, k)));
        }
    } else {
        for k in 1..=horizon {
            for i in 0..n {
                for j in 0..n {
                    active.insert((i, j, k));
                }
            }
        }
    }

    let mut lp = SparseLinearProgram::new();
    let mut columns = Vec::new();
    let mut out_cols: Vec<Vec<usize>> = vec![Vec::new(); n * horizon];
    let mut in_cols: Vec<Vec<usize>> = vec![Vec::new(); n * horizon];
    let mut place = |col: usize, i: usize, j: usize, k: usize, out_cols: &mut Vec<Vec<usize>>| {
        out_cols[(k - 1) * n + i].push(col);
        let arrive = k + scenario.travel.tau(i, j, t0 + k);
        if arrive <= horizon {
            in_cols[(arrive - 1) * n + j].push(col);
        }
    };

    let mut idle_col = vec![0; n * horizon];
    for k in 1..=horizon {
        for i in 0..n {
            for j in 0..n {
                let col = lp.add_var(costs.reb(i, j, t0 + k), 0.0, f64::INFINITY);
                columns.push(MpcColumn::Rebalance { i, j, t: k });
                place(col, i, j, k, &mut out_cols);
                if i == j {
                    idle_col[(k - 1) * n + i] = col;
                }
            }
        }
    }
    // (i, j, k) -> (x^p, d, w)
    let mut element_cols: Vec<((usize, usize, usize), usize, usize, Option<usize>)> = Vec::new();
    for &(i, j, k) in &active {
        let p = lp.add_var(0.0, 0.0, f64::INFINITY);
        columns.push(MpcColumn::Passenger { i, j, t: k });
        place(p, i, j, k, &mut out_cols);
        let d = lp.add_var(costs.drop(i, j, t0 + k), 0.0, f64::INFINITY);
        columns.push(MpcColumn::Drop { i, j, t: k });
        let w = outstanding.contains_key(&(i, j)).then(|| {
            columns.push(MpcColumn::Wait { i, j, t: k });
            lp.add_var(costs.wait(i, j, k), 0.0, f64::INFINITY)
        });
        element_cols.push(((i, j, k), p, d, w));
    }
    drop(place);

    let mut supply = vec![0u32; n * horizon];
    let mut basic = vec![false; lp.num_vars()];
    for k in 1..=horizon {
        for i in 0..n {
            let node = (k - 1) * n + i;
            supply[node] = obs.supply(i, k);
            let mut coefs: Vec<(usize, f64)> = out_cols[node].iter().map(|&c| (c, 1.0)).collect();
            coefs.extend(in_cols[node].iter().map(|&c| (c, -1.0)));
            lp.add_row(Sense::Eq, supply[node] as f64, &coefs);
            basic[idle_col[node]] = true;
        }
    }
    let mut wait_cols: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for &((i, j, k), p, d, w) in &element_cols {
        let mut coefs = vec![(p, 1.0), (d, 1.0)];
        if let Some(w) = w {
            coefs.push((w, -1.0));
            wait_cols.entry((i, j)).or_default().push(w);
        }
        lp.add_row(Sense::Eq, fc.get(i, j, k) as f64, &coefs);
        basic[d] = true;
    }
    for (&(i, j), &count) in &outstanding {
        let cols = &wait_cols[&(i, j)];
        let coefs: Vec<(usize, f64)> = cols.iter().map(|&c| (c, 1.0)).collect();
        lp.add_row(Sense::Eq, count as f64, &coefs);
        basic[*cols.last().expect("outstanding pairs span the horizon")] = true;
    }

    // Idle chains carry every vehicle, drops absorb the forecast and waiting
    // customers are picked up in the last step: a feasible, triangular start.
    let start = Basis {
        columns: basic
            .iter()
            .map(|&b| if b { BasisState::Basic } else { BasisState::AtLower })
            .collect(),
        rows: vec![BasisState::AtLower; lp.num_rows()],
    };
    let mut milp = MilpProblem::all_integer(lp);
    milp.start = Some(start);
    Ok(MpcProblem {
        milp,
        columns,
        num_regions: n,
        horizon,
        t0,
        supply,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MpcSolveStats {
    pub wall_time: Duration,
    pub nodes: u64,
    pub iterations: u64,
    pub num_vars: usize,
    pub num_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    pub t0: usize,
    pub num_regions: usize,
    pub horizon: usize,
    pub x_p: BTreeMap<(usize, usize, usize), u64>,
    /// Includes idling (`i == j`).
    pub x_r: BTreeMap<(usize, usize, usize), u64>,
    pub w: BTreeMap<(usize, usize, usize), u64>,
    pub d: BTreeMap<(usize, usize, usize), u64>,
    pub objective: f64,
    pub status: Status,
    pub gap: f64,
    pub stats: MpcSolveStats,
    /// No integral plan was found within budget; `x_r` holds only step-1
    /// moves taken from the rounded-down relaxation.
    pub fallback: bool,
}

impl MpcPlan {
    pub fn rows(&self) -> Vec<PlanRow> {
        let mut out = Vec::new();
        let groups = [(&self.x_p, PlanKind::Passenger), (&self.w, PlanKind::Wait), (&self.d, PlanKind::Drop)];
        for (flows, kind) in groups {
            out.extend(flows.iter().map(|(&(i, j, t), &count)| PlanRow { i, j, t, kind, count }));
        }
        for (&(i, j, t), &count) in &self.x_r {
            let kind = if i == j { PlanKind::Idle } else { PlanKind::Rebalance };
            out.push(PlanRow { i, j, t, kind, count });
        }
        out
    }
}

pub fn solve_mpc(p: &MpcProblem, limits: MilpLimits) -> Result<MpcPlan> {
    let started = Instant::now();
    let result = solve_milp(&p.milp, limits)?;
    let mut stats = MpcSolveStats {
        wall_time: Duration::ZERO,
        nodes: result.stats.nodes,
        iterations: result.stats.iterations,
        num_vars: p.num_vars(),
        num_rows: p.num_rows(),
    };
    let mut plan = MpcPlan {
        t0: p.t0,
        num_regions: p.num_regions,
        horizon: p.horizon,
        x_p: BTreeMap::new(),
        x_r: BTreeMap::new(),
        w: BTreeMap::new(),
        d: BTreeMap::new(),
        objective: result.objective,
        status: result.status,
        gap: result.gap(),
        stats: MpcSolveStats::default(),
        fallback: false,
    };
    match &result.values {
        Some(values) => {
            for (col, &v) in p.columns.iter().zip(values) {
                let v = v.round();
                if v < 0.5 {
                    continue;
                }
                let (map, key) = match *col {
                    MpcColumn::Passenger { i, j, t } => (&mut plan.x_p, (i, j, t)),
                    MpcColumn::Rebalance { i, j, t } => (&mut plan.x_r, (i, j, t)),
                    MpcColumn::Wait { i, j, t } => (&mut plan.w, (i, j, t)),
                    MpcColumn::Drop { i, j, t } => (&mut plan.d, (i, j, t)),
                };
                *map.entry(key).or_insert(0) += v as u64;
            }
        }
        None if result.status == Status::LimitReached => {
            log::warn!("no integral plan within budget at t0 = {}; rounding the relaxation", p.t0);
            fallback_moves(p, limits, &mut plan)?;
        }
        None => {
            return Err(Error::input(format!("controller problem ended {}", result.status)));
        }
    }
    stats.wall_time = started.elapsed();
    plan.stats = stats;
    Ok(plan)
}

/// Step-1 rebalancing from the LP relaxation, rounded down and capped by the
/// vehicles available at each origin.
fn fallback_moves(p: &MpcProblem, limits: MilpLimits, plan: &mut MpcPlan) -> Result<()> {
    plan.fallback = true;
    let options = LpOptions {
        time_limit: Some(limits.time_limit),
        ..LpOptions::default()
    };
    let relaxed = solve_lp_warm(&p.milp.lp, &options, p.milp.start.as_ref())?;
    let Some(values) = relaxed.values else {
        return Err(Error::Budget(format!("relaxation at t0 = {} ended {}", p.t0, relaxed.status)));
    };
    let mut left: Vec<u64> = (0..p.num_regions).map(|i| p.supply[i] as u64).collect();
    for (col, &v) in p.columns.iter().zip(&values) {
        if let MpcColumn::Rebalance { i, j, t: 1 } = *col {
            let take = (v + 1e-9).floor().max(0.0) as u64;
            let take = take.min(left[i]);
            if i != j && take > 0 {
                left[i] -= take;
                plan.x_r.insert((i, j, 1), take);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RebalanceTask {
    pub origin: usize,
    pub destination: usize,
    /// Absolute step in which the task is issued.
    pub issue_step: usize,
    pub count: u32,
}

/// One task per nonidle first-interval rebalancing flow.
pub fn first_step_tasks(plan: &MpcPlan) -> Vec<RebalanceTask> {
    plan.x_r
        .iter()
        .filter(|(&(i, j, t), &c)| t == 1 && i != j && c > 0)
        .map(|(&(i, j, _), &c)| RebalanceTask {
            origin: i,
            destination: j,
            issue_step: plan.t0 + 1,
            count: c as u32,
        })
        .collect()
}

/// Every violated constraint of the controller problem, recomputed from the
/// plan itself. Empty for a valid plan.
pub fn plan_violations(plan: &MpcPlan, obs: &StateObservation, fc: &Forecast, scenario: &Scenario) -> Vec<String> {
    let mut out = Vec::new();
    let n = plan.num_regions;
    let horizon = plan.horizon;
    let mut balance = vec![0i64; n * horizon];
    for flows in [&plan.x_p, &plan.x_r] {
        for (&(i, j, k), &c) in flows {
            balance[(k - 1) * n + i] += c as i64;
            let arrive = k + scenario.travel.tau(i, j, plan.t0 + k);
            if arrive <= horizon {
                balance[(arrive - 1) * n + j] -= c as i64;
            }
        }
    }
    for k in 1..=horizon {
        for i in 0..n {
            let r = balance[(k - 1) * n + i] - obs.supply(i, k) as i64;
            if r != 0 {
                out.push(format!("conservation at ({i},{k}) off by {r}"));
            }
        }
    }
    let get = |m: &BTreeMap<(usize, usize, usize), u64>, key| m.get(&key).copied().unwrap_or(0) as i64;
    for k in 1..=horizon {
        for i in 0..n {
            for j in 0..n {
                let key = (i, j, k);
                let lhs = get(&plan.x_p, key) + get(&plan.d, key) - get(&plan.w, key);
                if lhs != fc.get(i, j, k) as i64 {
                    out.push(format!("passenger balance at ({i},{j},{k}) is {lhs}, forecast {}", fc.get(i, j, k)));
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let picked: i64 = (1..=horizon).map(|k| get(&plan.w, (i, j, k))).sum();
            let waiting = obs.outstanding.get(&(i, j)).copied().unwrap_or(0) as i64;
            if picked != waiting {
                out.push(format!("pair ({i},{j}) schedules {picked} pickups for {waiting} waiting"));
            }
        }
    }
    out
}

/// Objective of `plan` recomputed from its flows.
pub fn plan_cost(plan: &MpcPlan, scenario: &Scenario) -> f64 {
    let c = &scenario.costs;
    let t0 = plan.t0;
    let reb: f64 = plan.x_r.iter().map(|(&(i, j, k), &v)| c.reb(i, j, t0 + k) * v as f64).sum();
    let wait: f64 = plan.w.iter().map(|(&(i, j, k), &v)| c.wait(i, j, k) * v as f64).sum();
    let drop: f64 = plan.d.iter().map(|(&(i, j, k), &v)| c.drop(i, j, t0 + k) * v as f64).sum();
    reb + wait + drop
}
