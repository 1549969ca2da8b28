//! Tick-level replay of a trip log under a rebalancing controller.
//!
//! Each tick runs, in order: vehicle arrivals; at control epochs, deletion of
//! unused tasks, observation and planning; new requests; FIFO matching of
//! waiting customers to idle vehicles; dispatch of pending tasks to the idle
//! vehicles left over; recording.

pub mod reactive;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Duration;

use amod_opt::Status;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forecast::Forecaster;
use crate::io::trips::TripLog;
use crate::model::{quantize, DemandSet, Scenario};
use crate::mpc::{build_mpc_problem, first_step_tasks, solve_mpc, MpcSettings, RebalanceTask, StateObservation};

use self::reactive::{reactive_moves, ReactiveState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VehicleStatus {
    Idle { region: usize },
    Serving { destination: usize, arrival_tick: u64 },
    Rebalancing { destination: usize, arrival_tick: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vehicle {
    pub id: usize,
    pub status: VehicleStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CustomerRequest {
    pub id: usize,
    /// Request time in seconds.
    pub request_time: u64,
    pub request_tick: u64,
    pub origin: usize,
    pub destination: usize,
    pub trip_ticks: u64,
    pub pickup_tick: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistribution {
    /// Equal shares; the remainder goes to randomly drawn distinct regions.
    Uniform,
    /// Proportional to an offline plan's seeds, scaled to the fleet size.
    FromSeed(Vec<u64>),
    Explicit(Vec<u32>),
}

#[derive(Debug, Clone)]
pub enum Controller {
    Mpc { forecaster: Forecaster, settings: MpcSettings },
    /// MPC with an empty forecast.
    TvReactive { settings: MpcSettings },
    Reactive,
    None,
}

impl Controller {
    pub fn label(&self) -> String {
        match self {
            Controller::Mpc { forecaster, .. } => format!("mpc-{}", forecaster.provenance()),
            Controller::TvReactive { .. } => "tv-reactive".into(),
            Controller::Reactive => "reactive".into(),
            Controller::None => "none".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub fleet_size: u32,
    pub initial: InitialDistribution,
    pub controller: Controller,
    pub seed: u64,
    /// Stop the run at the first broken accounting identity.
    pub check_invariants: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TickSeries {
    pub idle: Vec<u32>,
    pub serving: Vec<u32>,
    pub rebalancing: Vec<u32>,
    pub waiting: Vec<u32>,
    /// Cumulative requests released.
    pub arrived: Vec<u32>,
    /// Cumulative customers dropped off.
    pub delivered: Vec<u32>,
    /// Vehicles ordered to rebalance at this tick (epoch ticks only).
    pub tasks_issued: Vec<u32>,
    /// Vehicles that started rebalancing at this tick.
    pub reb_departures: Vec<u32>,
}

/// Equality ignores `wall_time`, the only field that differs between
/// identical runs.
#[derive(Debug, Clone)]
pub struct SolveRecord {
    pub t0: usize,
    pub wall_time: Duration,
    pub nodes: u64,
    pub iterations: u64,
    pub status: Status,
    pub gap: f64,
    pub num_vars: usize,
    pub num_rows: usize,
    pub fallback: bool,
}

impl PartialEq for SolveRecord {
    fn eq(&self, other: &Self) -> bool {
        self.t0 == other.t0
            && self.nodes == other.nodes
            && self.iterations == other.iterations
            && self.status == other.status
            && self.gap.to_bits() == other.gap.to_bits()
            && self.num_vars == other.num_vars
            && self.num_rows == other.num_rows
            && self.fallback == other.fallback
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub controller: String,
    pub tick_seconds: u32,
    pub fleet_size: u32,
    /// Wait in seconds of every customer picked up, in request order.
    pub waits_s: Vec<u64>,
    /// Customers still queued at the end, with their wait so far.
    pub unserved_waits_s: Vec<u64>,
    pub series: TickSeries,
    pub solves: Vec<SolveRecord>,
    /// Vehicles sent on rebalancing trips.
    pub reb_trips: u64,
    /// Planning intervals spent rebalancing, summed over vehicles.
    pub reb_vehicle_steps: u64,
    /// Vehicles ordered to rebalance across all epochs.
    pub tasks_issued: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitSummary {
    pub customers: usize,
    pub unserved: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl MetricsLog {
    /// Wait statistics over every customer that requested a ride; customers
    /// never picked up count with their wait at the end of the run.
    pub fn wait_summary(&self) -> WaitSummary {
        let mut all: Vec<u64> = self.waits_s.iter().chain(&self.unserved_waits_s).copied().collect();
        all.sort_unstable();
        let count = all.len();
        let mean = if count == 0 { 0.0 } else { all.iter().sum::<u64>() as f64 / count as f64 };
        WaitSummary {
            customers: count,
            unserved: self.unserved_waits_s.len(),
            mean,
            median: percentile(&all, 0.5),
            p95: percentile(&all, 0.95),
        }
    }

    pub fn mean_wait(&self) -> f64 {
        self.wait_summary().mean
    }
}

/// Linear interpolation between closest ranks of sorted data.
fn percentile(sorted: &[u64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac
}

struct State {
    vehicles: Vec<Vehicle>,
    idle: Vec<BTreeSet<usize>>,
    /// tick -> vehicles arriving then
    arrivals: BTreeMap<u64, Vec<usize>>,
    queues: Vec<VecDeque<usize>>,
    customers: Vec<CustomerRequest>,
    /// Vehicle id -> customer on board.
    on_board: BTreeMap<usize, usize>,
    pending: Vec<PendingTask>,
}

impl State {
    fn dispatch(&mut self, id: usize, status: VehicleStatus) {
        let arrival = match status {
            VehicleStatus::Serving { arrival_tick, .. } | VehicleStatus::Rebalancing { arrival_tick, .. } => arrival_tick,
            VehicleStatus::Idle { .. } => unreachable!("dispatch always moves a vehicle"),
        };
        self.vehicles[id].status = status;
        self.arrivals.entry(arrival).or_default().push(id);
    }
}

/// A rebalancing task with vehicles still to send.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingTask {
    pub task: RebalanceTask,
    pub remaining: u32,
}

impl PendingTask {
    pub fn new(task: RebalanceTask) -> Self {
        PendingTask { task, remaining: task.count }
    }
}

/// Pairs the longest-waiting customers of each region with its idle
/// vehicles, lowest vehicle id first. Queues hold customer ids in request
/// order. Returns `(customer, vehicle)` pairs.
pub fn match_customers(queues: &mut [VecDeque<usize>], idle: &mut [BTreeSet<usize>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (queue, vehicles) in queues.iter_mut().zip(idle.iter_mut()) {
        while !queue.is_empty() && !vehicles.is_empty() {
            let c = queue.pop_front().expect("queue checked nonempty");
            let v = vehicles.pop_first().expect("idle set checked nonempty");
            out.push((c, v));
        }
    }
    out
}

/// Sends idle vehicles on pending tasks in task order. Fully served tasks
/// are removed; the rest stay pending. Returns `(vehicle, origin,
/// destination)` per departure.
pub fn apply_tasks(pending: &mut Vec<PendingTask>, idle: &mut [BTreeSet<usize>]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for p in pending.iter_mut() {
        while p.remaining > 0 {
            let Some(v) = idle[p.task.origin].pop_first() else { break };
            out.push((v, p.task.origin, p.task.destination));
            p.remaining -= 1;
        }
    }
    pending.retain(|p| p.remaining > 0);
    out
}

/// Replays `log` over the scenario's horizon under `config`.
pub fn run(scenario: &Scenario, log: &TripLog, config: &SimConfig) -> Result<MetricsLog> {
    let n = scenario.num_regions();
    let grid = scenario.grid;
    let tick = grid.tick as u64;
    let tpe = grid.ticks_per_step() as u64;
    let total_ticks = grid.horizon as u64 * tpe;
    if let Some(t) = log.trips.iter().find(|t| t.origin >= n || t.destination >= n) {
        return Err(Error::input(format!("trip {t:?} references a region outside the scenario")));
    }
    if log.trips.windows(2).any(|w| w[0].request_time > w[1].request_time) {
        return Err(Error::input("trip log must be sorted by request time"));
    }

    let counts = initial_counts(n, config)?;
    let mut state = State {
        vehicles: Vec::with_capacity(config.fleet_size as usize),
        idle: vec![BTreeSet::new(); n],
        arrivals: BTreeMap::new(),
        queues: vec![VecDeque::new(); n],
        customers: Vec::with_capacity(log.len()),
        on_board: BTreeMap::new(),
        pending: Vec::new(),
    };
    for (region, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            let id = state.vehicles.len();
            state.vehicles.push(Vehicle { id, status: VehicleStatus::Idle { region } });
            state.idle[region].insert(id);
        }
    }
    for (id, t) in log.trips.iter().enumerate() {
        state.customers.push(CustomerRequest {
            id,
            request_time: t.request_time,
            request_tick: t.request_time.div_ceil(tick),
            origin: t.origin,
            destination: t.destination,
            trip_ticks: ((t.duration_s / tick as f64).ceil() as u64).max(1),
            pickup_tick: None,
        });
    }
    let reb_ticks: Vec<u64> = (0..n * n)
        .map(|k| ((scenario.travel.seconds(k / n, k % n) / tick as f64).ceil() as u64).max(1))
        .collect();

    let mut metrics = MetricsLog {
        controller: config.controller.label(),
        tick_seconds: grid.tick,
        fleet_size: config.fleet_size,
        waits_s: Vec::new(),
        unserved_waits_s: Vec::new(),
        series: TickSeries::default(),
        solves: Vec::new(),
        reb_trips: 0,
        reb_vehicle_steps: 0,
        tasks_issued: 0,
    };
    let mut observed = DemandSet::new();
    let mut next_customer = 0;
    let mut delivered = 0u32;

    for k in 0..total_ticks {
        if let Some(ids) = state.arrivals.remove(&k) {
            for id in ids {
                let region = match state.vehicles[id].status {
                    VehicleStatus::Serving { destination, .. } => {
                        state.on_board.remove(&id);
                        delivered += 1;
                        destination
                    }
                    VehicleStatus::Rebalancing { destination, .. } => destination,
                    VehicleStatus::Idle { .. } => unreachable!("idle vehicles are not scheduled to arrive"),
                };
                state.vehicles[id].status = VehicleStatus::Idle { region };
                state.idle[region].insert(id);
            }
        }

        let mut issued = 0u32;
        if k % tpe == 0 {
            state.pending.clear();
            let t0 = (k / tpe) as usize;
            let tasks = plan_epoch(scenario, config, &state, &observed, k, t0, tpe, &mut metrics)?;
            issued = tasks.iter().map(|t| t.count).sum();
            metrics.tasks_issued += issued as u64;
            state.pending = tasks.into_iter().map(PendingTask::new).collect();
        }

        while next_customer < state.customers.len() && state.customers[next_customer].request_tick <= k {
            let c = state.customers[next_customer];
            let step = quantize(c.request_time as f64, &grid)?;
            if step <= grid.horizon {
                observed.add(c.origin, c.destination, step, 1);
            }
            state.queues[c.origin].push_back(next_customer);
            next_customer += 1;
        }

        for (cid, vid) in match_customers(&mut state.queues, &mut state.idle) {
            let c = &mut state.customers[cid];
            c.pickup_tick = Some(k);
            metrics.waits_s.push(k * tick - c.request_time);
            let status = VehicleStatus::Serving { destination: c.destination, arrival_tick: k + c.trip_ticks };
            state.on_board.insert(vid, cid);
            state.dispatch(vid, status);
        }

        let mut pending = std::mem::take(&mut state.pending);
        let departed = apply_tasks(&mut pending, &mut state.idle);
        state.pending = pending;
        for &(vid, i, j) in &departed {
            let status = VehicleStatus::Rebalancing { destination: j, arrival_tick: k + reb_ticks[i * n + j] };
            state.dispatch(vid, status);
            metrics.reb_trips += 1;
            metrics.reb_vehicle_steps += scenario.travel.tau(i, j, (k / tpe) as usize + 1) as u64;
        }
        let departures = departed.len() as u32;

        let idle: u32 = state.idle.iter().map(|s| s.len() as u32).sum();
        let (mut serving, mut rebalancing) = (0u32, 0u32);
        for v in &state.vehicles {
            match v.status {
                VehicleStatus::Serving { .. } => serving += 1,
                VehicleStatus::Rebalancing { .. } => rebalancing += 1,
                VehicleStatus::Idle { .. } => {}
            }
        }
        let waiting: u32 = state.queues.iter().map(|q| q.len() as u32).sum();
        let s = &mut metrics.series;
        s.idle.push(idle);
        s.serving.push(serving);
        s.rebalancing.push(rebalancing);
        s.waiting.push(waiting);
        s.arrived.push(next_customer as u32);
        s.delivered.push(delivered);
        s.tasks_issued.push(issued);
        s.reb_departures.push(departures);
        if config.check_invariants {
            if idle + serving + rebalancing != config.fleet_size {
                return Err(Error::input(format!("tick {k}: vehicle count {} != fleet", idle + serving + rebalancing)));
            }
            if next_customer as u32 != delivered + state.on_board.len() as u32 + waiting {
                return Err(Error::input(format!("tick {k}: customer accounting broken")));
            }
        }
    }

    for q in &state.queues {
        for &cid in q {
            let c = &state.customers[cid];
            metrics.unserved_waits_s.push((total_ticks * tick).saturating_sub(c.request_time));
        }
    }
    Ok(metrics)
}

fn initial_counts(n: usize, config: &SimConfig) -> Result<Vec<u32>> {
    let m = config.fleet_size;
    let counts = match &config.initial {
        InitialDistribution::Uniform => {
            let mut c = vec![m / n as u32; n];
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
            for &i in order.iter().take(m as usize % n) {
                c[i] += 1;
            }
            c
        }
        InitialDistribution::FromSeed(seed) => {
            if seed.len() != n {
                return Err(Error::input("seed distribution has the wrong number of regions"));
            }
            scale_to(seed, m)
        }
        InitialDistribution::Explicit(c) => {
            if c.len() != n || c.iter().map(|&x| x as u64).sum::<u64>() != m as u64 {
                return Err(Error::input("explicit distribution must list every region and sum to the fleet size"));
            }
            c.clone()
        }
    };
    Ok(counts)
}

/// Largest-remainder apportionment of `m` vehicles proportional to `weights`
/// (uniform when all weights are zero). Extra vehicles beyond the weights'
/// total are spread in proportion too.
pub fn scale_to(weights: &[u64], m: u32) -> Vec<u32> {
    let n = weights.len();
    let total: u64 = weights.iter().sum();
    if total == m as u64 {
        return weights.iter().map(|&w| w as u32).collect();
    }
    let w: Vec<f64> = if total == 0 { vec![1.0; n] } else { weights.iter().map(|&x| x as f64).collect() };
    let sum: f64 = w.iter().sum();
    let exact: Vec<f64> = w.iter().map(|x| x / sum * m as f64).collect();
    let mut out: Vec<u32> = exact.iter().map(|x| x.floor() as u32).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let missing = m - out.iter().sum::<u32>();
    for &i in order.iter().take(missing as usize) {
        out[i] += 1;
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn plan_epoch(
    scenario: &Scenario,
    config: &SimConfig,
    state: &State,
    observed: &DemandSet,
    k: u64,
    t0: usize,
    tpe: u64,
    metrics: &mut MetricsLog,
) -> Result<Vec<RebalanceTask>> {
    let n = scenario.num_regions();
    let idle: Vec<u32> = state.idle.iter().map(|s| s.len() as u32).collect();
    match &config.controller {
        Controller::None => Ok(Vec::new()),
        Controller::Reactive => {
            let mut inbound = vec![0u32; n];
            for v in &state.vehicles {
                match v.status {
                    VehicleStatus::Serving { destination, .. } | VehicleStatus::Rebalancing { destination, .. } => {
                        inbound[destination] += 1
                    }
                    VehicleStatus::Idle { .. } => {}
                }
            }
            let queued = state.queues.iter().map(|q| q.len() as u32).collect();
            let moves = reactive_moves(&ReactiveState { idle, inbound, queued }, &scenario.travel)?;
            Ok(moves
                .into_iter()
                .map(|(i, j, c)| RebalanceTask { origin: i, destination: j, issue_step: t0 + 1, count: c })
                .collect())
        }
        Controller::Mpc { forecaster, settings } => mpc_epoch(scenario, state, observed, k, t0, tpe, idle, Some(forecaster), settings, metrics),
        Controller::TvReactive { settings } => mpc_epoch(scenario, state, observed, k, t0, tpe, idle, None, settings, metrics),
    }
}

#[allow(clippy::too_many_arguments)]
fn mpc_epoch(
    scenario: &Scenario,
    state: &State,
    observed: &DemandSet,
    k: u64,
    t0: usize,
    tpe: u64,
    idle: Vec<u32>,
    forecaster: Option<&Forecaster>,
    settings: &MpcSettings,
    metrics: &mut MetricsLog,
) -> Result<Vec<RebalanceTask>> {
    let n = scenario.num_regions();
    let mut obs = StateObservation::new(n, settings.horizon, t0);
    obs.idle = idle;
    for v in &state.vehicles {
        match v.status {
            VehicleStatus::Serving { destination, arrival_tick } | VehicleStatus::Rebalancing { destination, arrival_tick } => {
                obs.add_inbound(destination, arrival_tick - k, tpe as u32);
            }
            VehicleStatus::Idle { .. } => {}
        }
    }
    for q in &state.queues {
        for &cid in q {
            let c = &state.customers[cid];
            *obs.outstanding.entry((c.origin, c.destination)).or_insert(0) += 1;
        }
    }
    let fc = match forecaster {
        Some(f) => f.forecast(observed, t0)?.truncated(settings.horizon),
        None => crate::forecast::Forecast::empty(t0, 1, crate::forecast::Provenance::Zero),
    };
    let problem = build_mpc_problem(&obs, &fc, scenario, settings)?;
    let plan = solve_mpc(&problem, settings.limits)?;
    if plan.fallback && !settings.allow_fallback {
        return Err(Error::Budget(format!("no integral plan at t0 = {t0} within budget")));
    }
    metrics.solves.push(SolveRecord {
        t0,
        wall_time: plan.stats.wall_time,
        nodes: plan.stats.nodes,
        iterations: plan.stats.iterations,
        status: plan.status,
        gap: plan.gap,
        num_vars: plan.stats.num_vars,
        num_rows: plan.stats.num_rows,
        fallback: plan.fallback,
    });
    Ok(first_step_tasks(&plan))
}
