//! Problem-instance types shared by the planners, the simulator and I/O.
//!
//! Steps are 1-based: step `t` covers wall time `[(t-1)·Δt, t·Δt)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    /// Planning interval length in seconds.
    pub delta_t: u32,
    /// Number of planning intervals in the period.
    pub horizon: usize,
    /// Simulator tick in seconds.
    pub tick: u32,
}

impl TimeGrid {
    pub fn new(delta_t: u32, horizon: usize, tick: u32) -> Result<Self> {
        let g = TimeGrid { delta_t, horizon, tick };
        let problems = g.problems();
        if problems.is_empty() {
            Ok(g)
        } else {
            Err(Error::input(problems.join("; ")))
        }
    }

    /// One day of 5-minute intervals with 6-second ticks.
    pub fn day() -> Self {
        TimeGrid {
            delta_t: 300,
            horizon: 288,
            tick: 6,
        }
    }

    pub fn ticks_per_step(&self) -> u32 {
        self.delta_t / self.tick
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.delta_t == 0 {
            out.push("delta_t must be positive".to_string());
        }
        if self.horizon == 0 {
            out.push("horizon must be at least 1".to_string());
        }
        if self.tick == 0 || (self.delta_t > 0 && self.delta_t % self.tick != 0) {
            out.push(format!("tick {} must divide delta_t {}", self.tick, self.delta_t));
        }
        out
    }
}

/// Step containing `wall_time` seconds, clamped to the `horizon + 1` sentinel.
pub fn quantize(wall_time: f64, grid: &TimeGrid) -> Result<usize> {
    if !(wall_time >= 0.0) {
        return Err(Error::input(format!("wall time {wall_time} is negative")));
    }
    let step = (wall_time / grid.delta_t as f64).floor() as usize + 1;
    Ok(step.min(grid.horizon + 1))
}

/// Whole intervals occupied by a trip of `seconds`; never less than one.
pub fn travel_steps(seconds: f64, grid: &TimeGrid) -> usize {
    let s = seconds.max(0.0);
    ((s / grid.delta_t as f64).ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionSet {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl RegionSet {
    pub fn new<S: Into<String>>(ids: impl IntoIterator<Item = S>) -> Result<Self> {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        if ids.is_empty() {
            return Err(Error::input("region set is empty"));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (k, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), k).is_some() {
                return Err(Error::input(format!("duplicate region id {id:?}")));
            }
        }
        Ok(RegionSet { ids, index })
    }

    /// Regions named `0..n`.
    pub fn numbered(n: usize) -> Self {
        RegionSet::new((0..n).map(|k| k.to_string())).expect("numbered ids are unique")
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, k: usize) -> &str {
        &self.ids[k]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }
}

/// Travel times between regions, in whole planning intervals, plus the mean
/// travel seconds they were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeMatrix {
    n: usize,
    seconds: Vec<f64>,
    steps: Vec<usize>,
    /// Optional per-departure-step override, `varying[t-1][i*n+j]`.
    varying: Option<Vec<Vec<usize>>>,
}

impl TravelTimeMatrix {
    /// Builds `τ_ij = travel_steps(seconds_ij)` with one-interval idle arcs.
    pub fn from_seconds(n: usize, seconds: Vec<f64>, grid: &TimeGrid) -> Result<Self> {
        if seconds.len() != n * n {
            return Err(Error::input(format!("travel matrix has {} entries, expected {}", seconds.len(), n * n)));
        }
        if let Some(bad) = seconds.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(Error::input(format!("travel time {bad} is not a nonnegative number")));
        }
        let mut steps: Vec<usize> = seconds.iter().map(|&s| travel_steps(s, grid)).collect();
        for i in 0..n {
            steps[i * n + i] = 1;
        }
        Ok(TravelTimeMatrix {
            n,
            seconds,
            steps,
            varying: None,
        })
    }

    /// Explicit step counts with the seconds they stand for.
    pub fn from_parts(n: usize, seconds: Vec<f64>, steps: Vec<usize>) -> Result<Self> {
        if seconds.len() != n * n || steps.len() != n * n {
            return Err(Error::input("travel tables must be n x n"));
        }
        Ok(TravelTimeMatrix {
            n,
            seconds,
            steps,
            varying: None,
        })
    }

    /// Uses the given step counts as-is (seconds become `steps · Δt`). No
    /// invariant is enforced here; see [`validate`].
    pub fn from_steps(n: usize, steps: Vec<usize>, delta_t: u32) -> Self {
        assert_eq!(steps.len(), n * n, "step matrix must be n x n");
        let seconds = steps.iter().map(|&s| s as f64 * delta_t as f64).collect();
        TravelTimeMatrix {
            n,
            seconds,
            steps,
            varying: None,
        }
    }

    /// Adds departure-time-dependent step counts, one `n·n` table per step.
    pub fn with_time_varying(mut self, tables: Vec<Vec<usize>>) -> Result<Self> {
        if tables.iter().any(|t| t.len() != self.n * self.n) {
            return Err(Error::input("time-varying travel table has wrong size"));
        }
        self.varying = Some(tables);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Intervals to go from `i` to `j` when departing at step `t` (1-based).
    /// Steps past the varying table use its last entry.
    pub fn tau(&self, i: usize, j: usize, t: usize) -> usize {
        match &self.varying {
            Some(tables) if !tables.is_empty() => {
                let k = t.saturating_sub(1).min(tables.len() - 1);
                tables[k][i * self.n + j]
            }
            _ => self.steps[i * self.n + j],
        }
    }

    /// Mean travel seconds from `i` to `j`.
    pub fn seconds(&self, i: usize, j: usize) -> f64 {
        self.seconds[i * self.n + j]
    }

    pub fn is_time_varying(&self) -> bool {
        self.varying.is_some()
    }

    fn step_tables(&self) -> Vec<&[usize]> {
        match &self.varying {
            Some(tables) => tables.iter().map(|t| t.as_slice()).collect(),
            None => vec![self.steps.as_slice()],
        }
    }
}

/// Sparse customer counts `λ_ijt`; absent entries are zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DemandSet {
    // Keyed by (t, i, j) so a time window is a contiguous range.
    counts: BTreeMap<(usize, usize, usize), u32>,
}

impl DemandSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, i: usize, j: usize, t: usize, count: u32) {
        if count > 0 {
            *self.counts.entry((t, i, j)).or_insert(0) += count;
        }
    }

    pub fn set(&mut self, i: usize, j: usize, t: usize, count: u32) {
        if count == 0 {
            self.counts.remove(&(t, i, j));
        } else {
            self.counts.insert((t, i, j), count);
        }
    }

    pub fn get(&self, i: usize, j: usize, t: usize) -> u32 {
        self.counts.get(&(t, i, j)).copied().unwrap_or(0)
    }

    /// Entries as `(i, j, t, count)`, ordered by step.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, u32)> + '_ {
        self.counts.iter().map(|(&(t, i, j), &c)| (i, j, t, c))
    }

    /// Entries with `from <= t <= to`.
    pub fn window(&self, from: usize, to: usize) -> impl Iterator<Item = (usize, usize, usize, u32)> + '_ {
        self.counts
            .range((from, 0, 0)..(to.saturating_add(1), 0, 0))
            .map(|(&(t, i, j), &c)| (i, j, t, c))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn max_step(&self) -> Option<usize> {
        self.counts.keys().next_back().map(|k| k.0)
    }
}

/// Knobs for the default cost construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Rebalancing cost per interval of travel.
    pub reb_per_step: f64,
    /// Idling cost per vehicle and interval.
    pub idle_per_step: f64,
    /// Cost of leaving one predicted customer unserved.
    pub drop: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            reb_per_step: 10.0,
            idle_per_step: 1.0,
            drop: 10_000.0,
        }
    }
}

/// Time-invariant costs, read through `(i, j, t)` accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    n: usize,
    reb: Vec<f64>,
    drop: Vec<f64>,
    wait_per_step: Vec<f64>,
}

impl CostModel {
    /// Rebalancing proportional to travel intervals, idling at a flat rate,
    /// uniform drop cost, and waiting priced so that `T` intervals of waiting
    /// cost as much as a drop.
    pub fn from_travel(travel: &TravelTimeMatrix, params: CostParams, planning_horizon: usize) -> Self {
        let n = travel.len();
        let mut reb = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                reb[i * n + j] = if i == j {
                    params.idle_per_step
                } else {
                    params.reb_per_step * travel.tau(i, j, 1) as f64
                };
            }
        }
        let wait = params.drop / planning_horizon.max(1) as f64;
        CostModel {
            n,
            reb,
            drop: vec![params.drop; n * n],
            wait_per_step: vec![wait; n * n],
        }
    }

    pub fn from_parts(n: usize, reb: Vec<f64>, drop: Vec<f64>, wait_per_step: Vec<f64>) -> Result<Self> {
        if reb.len() != n * n || drop.len() != n * n || wait_per_step.len() != n * n {
            return Err(Error::input("cost tables must be n x n"));
        }
        Ok(CostModel {
            n,
            reb,
            drop,
            wait_per_step,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `c^r_ijt`; `i == j` is the idling cost.
    pub fn reb(&self, i: usize, j: usize, _t: usize) -> f64 {
        self.reb[i * self.n + j]
    }

    /// `c^d_ijt`.
    pub fn drop(&self, i: usize, j: usize, _t: usize) -> f64 {
        self.drop[i * self.n + j]
    }

    /// `c^w_ijt`: cost of picking up an outstanding customer at relative
    /// step `t`, i.e. after waiting `t` intervals.
    pub fn wait(&self, i: usize, j: usize, t: usize) -> f64 {
        t as f64 * self.wait_per_step[i * self.n + j]
    }

    fn tables(&self) -> [(&'static str, &[f64]); 3] {
        [("rebalancing", &self.reb), ("drop", &self.drop), ("wait", &self.wait_per_step)]
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub regions: RegionSet,
    pub grid: TimeGrid,
    pub travel: TravelTimeMatrix,
    pub demand: DemandSet,
    pub costs: CostModel,
}

impl Scenario {
    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Every invariant violation found in `scenario`; empty when well-formed.
pub fn validate(scenario: &Scenario) -> Vec<Violation> {
    let mut out: Vec<Violation> = scenario.grid.problems().into_iter().map(Violation).collect();
    let n = scenario.regions.len();
    if n == 0 {
        out.push(Violation("no regions".into()));
    }
    let travel = &scenario.travel;
    if travel.len() != n {
        out.push(Violation(format!("travel matrix covers {} regions, expected {n}", travel.len())));
    } else {
        for (k, table) in travel.step_tables().iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let tau = table[i * n + j];
                    if i == j && tau != 1 {
                        out.push(Violation(format!("tau({i},{i}) = {tau} in table {k}, idle arcs span one interval")));
                    } else if i != j && tau < 1 {
                        out.push(Violation(format!("tau({i},{j}) = {tau} in table {k}, must be at least 1")));
                    }
                }
            }
        }
    }
    for (i, j, t, _) in scenario.demand.iter() {
        if i >= n || j >= n {
            out.push(Violation(format!("demand ({i},{j},{t}) references an unknown region")));
        }
        if t == 0 || t > scenario.grid.horizon {
            out.push(Violation(format!("demand ({i},{j},{t}) lies outside steps 1..={}", scenario.grid.horizon)));
        }
    }
    let costs = &scenario.costs;
    if costs.len() != n {
        out.push(Violation(format!("cost model covers {} regions, expected {n}", costs.len())));
    } else {
        for (name, table) in costs.tables() {
            if let Some(v) = table.iter().find(|v| !v.is_finite() || **v < 0.0) {
                out.push(Violation(format!("{name} cost {v} must be finite and nonnegative")));
            }
        }
    }
    out
}
