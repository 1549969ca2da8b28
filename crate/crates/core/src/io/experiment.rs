//! Experiment harness: builds the scenario a config describes, runs the
//! requested controllers (concurrently when several runs are independent)
//! and writes summary, series and manifest files.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use amod_opt::MilpLimits;

use crate::error::{Error, Result};
use crate::forecast::{ForecastFile, Forecaster, HistoricalAverage};
use crate::io::config::KvConfig;
use crate::io::report::{write_bench, write_series, write_solves, write_summary, write_sweep, SweepRow};
use crate::io::synth::{generate_synthetic, SynthSpec};
use crate::io::travel::{build_travel_matrix, load_travel};
use crate::io::trips::{load_trips, scan_regions, TripLog};
use crate::model::{CostModel, CostParams, RegionSet, Scenario, TimeGrid};
use crate::mpc::MpcSettings;
use crate::offline::min_fleet_plan;
use crate::sim::{run, Controller, InitialDistribution, MetricsLog, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Sweep,
    Bench,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Sweep => "sweep",
            Mode::Bench => "bench",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "sweep" => Ok(Mode::Sweep),
            "bench" => Ok(Mode::Bench),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Synthetic(SynthSpec),
    Trips {
        path: PathBuf,
        /// Region ids; scanned from the trip file when absent.
        regions: Option<Vec<String>>,
        /// Travel seconds per pair; estimated from the trips when absent.
        travel: Option<PathBuf>,
        /// Wall time of step 1's start; the earliest request when absent.
        start: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastChoice {
    Oracle,
    HistoricalAverage,
    Persistence,
    Zero,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerChoice {
    Mpc(ForecastChoice),
    TvReactive,
    Reactive,
    None,
}

impl ControllerChoice {
    pub fn name(self) -> &'static str {
        match self {
            ControllerChoice::Mpc(ForecastChoice::Oracle) => "mpc-oracle",
            ControllerChoice::Mpc(ForecastChoice::HistoricalAverage) => "mpc-ha",
            ControllerChoice::Mpc(ForecastChoice::Persistence) => "mpc-persistence",
            ControllerChoice::Mpc(ForecastChoice::Zero) => "mpc-zero",
            ControllerChoice::Mpc(ForecastChoice::File) => "mpc-file",
            ControllerChoice::TvReactive => "tv-reactive",
            ControllerChoice::Reactive => "reactive",
            ControllerChoice::None => "none",
        }
    }

    fn uses_forecast(self) -> bool {
        matches!(self, ControllerChoice::Mpc(_))
    }
}

impl FromStr for ControllerChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let all = [
            ControllerChoice::Mpc(ForecastChoice::Oracle),
            ControllerChoice::Mpc(ForecastChoice::HistoricalAverage),
            ControllerChoice::Mpc(ForecastChoice::Persistence),
            ControllerChoice::Mpc(ForecastChoice::Zero),
            ControllerChoice::Mpc(ForecastChoice::File),
            ControllerChoice::TvReactive,
            ControllerChoice::Reactive,
            ControllerChoice::None,
        ];
        all.into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown controller `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FleetChoice {
    Fixed(u32),
    /// Offline minimum fleet plus a relative margin, rounded up.
    Auto { margin: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialChoice {
    Uniform,
    /// Proportional to the offline minimum-fleet plan's starting positions.
    OfflineSeed,
    Explicit(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub source: ScenarioSource,
    pub seed: u64,
    pub delta_t: u32,
    pub tick: u32,
    /// Simulated steps.
    pub steps: usize,
    /// First simulated step of the source day, counted from 0.
    pub window_start: usize,
    pub planning_horizon: usize,
    pub t_forward: usize,
    pub t_back: usize,
    pub costs: CostParams,
    pub fleet: FleetChoice,
    pub initial: InitialChoice,
    pub controllers: Vec<ControllerChoice>,
    pub ha_period: usize,
    pub ha_train_days: usize,
    /// Trip log of whole past periods, for `mpc-ha` on a trip-log source.
    pub ha_history: Option<PathBuf>,
    pub forecast_file: Option<PathBuf>,
    pub mpc_time_limit: Duration,
    pub mpc_max_nodes: u64,
    pub prune: bool,
    pub allow_fallback: bool,
    pub sweep_t_forward: Vec<usize>,
    pub threads: usize,
    pub check_invariants: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Simulate,
            source: ScenarioSource::Synthetic(SynthSpec::default()),
            seed: 1,
            delta_t: 300,
            tick: 6,
            steps: 288,
            window_start: 0,
            planning_horizon: 50,
            t_forward: 24,
            t_back: 12,
            costs: CostParams::default(),
            fleet: FleetChoice::Auto { margin: 0.15 },
            initial: InitialChoice::Uniform,
            controllers: vec![
                ControllerChoice::Mpc(ForecastChoice::Oracle),
                ControllerChoice::Mpc(ForecastChoice::HistoricalAverage),
                ControllerChoice::TvReactive,
                ControllerChoice::Reactive,
            ],
            ha_period: 288,
            ha_train_days: 15,
            ha_history: None,
            forecast_file: None,
            mpc_time_limit: Duration::from_secs(120),
            mpc_max_nodes: 100_000,
            prune: true,
            allow_fallback: true,
            sweep_t_forward: vec![3, 6, 12, 24, 48],
            threads: 4,
            check_invariants: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Every key a config may set; manifests add `result.*` keys, which are
/// ignored on load.
pub const KEYS: &[&str] = &[
    "mode",
    "source",
    "trips",
    "regions",
    "travel",
    "start_time",
    "seed",
    "delta_t",
    "tick",
    "steps",
    "window_start",
    "planning_horizon",
    "t_forward",
    "t_back",
    "cost.reb_per_step",
    "cost.idle_per_step",
    "cost.drop",
    "fleet",
    "fleet_margin",
    "initial",
    "controllers",
    "ha.period",
    "ha.train_days",
    "ha.history",
    "forecast_file",
    "mpc.time_limit_s",
    "mpc.max_nodes",
    "mpc.prune",
    "mpc.allow_fallback",
    "sweep.t_forward",
    "threads",
    "check_invariants",
    "out_dir",
    "synth.regions",
    "synth.trips",
    "synth.center_fraction",
    "synth.center_radius_m",
    "synth.ring_radius_m",
    "synth.speed_mps",
    "synth.overhead_s",
    "synth.background",
    "synth.morning_peak_h",
    "synth.evening_peak_h",
    "synth.peak_width_h",
    "synth.asymmetry",
    "synth.period_s",
    "synth.align_to_step",
    "synth.layout_seed",
];

impl ExperimentConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        if let Some(k) = kv.keys().find(|k| !k.starts_with("result.") && !KEYS.contains(k)) {
            return Err(Error::input(format!("unknown config key `{k}`")));
        }
        let d = ExperimentConfig::default();
        let costs = CostParams {
            reb_per_step: kv.get_or("cost.reb_per_step", d.costs.reb_per_step)?,
            idle_per_step: kv.get_or("cost.idle_per_step", d.costs.idle_per_step)?,
            drop: kv.get_or("cost.drop", d.costs.drop)?,
        };
        let planning_horizon = kv.get_or("planning_horizon", d.planning_horizon)?;
        let source = match kv.get_str("source").unwrap_or("synthetic") {
            "synthetic" => {
                let s = SynthSpec::default();
                ScenarioSource::Synthetic(SynthSpec {
                    regions: kv.get_or("synth.regions", s.regions)?,
                    trips: kv.get_or("synth.trips", s.trips)?,
                    center_fraction: kv.get_or("synth.center_fraction", s.center_fraction)?,
                    center_radius_m: kv.get_or("synth.center_radius_m", s.center_radius_m)?,
                    ring_radius_m: kv.get_or("synth.ring_radius_m", s.ring_radius_m)?,
                    speed_mps: kv.get_or("synth.speed_mps", s.speed_mps)?,
                    overhead_s: kv.get_or("synth.overhead_s", s.overhead_s)?,
                    background: kv.get_or("synth.background", s.background)?,
                    morning_peak_h: kv.get_or("synth.morning_peak_h", s.morning_peak_h)?,
                    evening_peak_h: kv.get_or("synth.evening_peak_h", s.evening_peak_h)?,
                    peak_width_h: kv.get_or("synth.peak_width_h", s.peak_width_h)?,
                    asymmetry: kv.get_or("synth.asymmetry", s.asymmetry)?,
                    period_s: kv.get_or("synth.period_s", s.period_s)?,
                    align_to_step: kv.get_or("synth.align_to_step", s.align_to_step)?,
                    layout_seed: kv.get_or("synth.layout_seed", s.layout_seed)?,
                    costs,
                    planning_horizon,
                })
            }
            "trips" => ScenarioSource::Trips {
                path: kv
                    .get::<PathBuf>("trips")?
                    .ok_or_else(|| Error::input("source = trips needs `trips = <path>`"))?,
                regions: kv.get_list("regions")?,
                travel: kv.get("travel")?,
                start: kv.get("start_time")?,
            },
            other => return Err(Error::input(format!("source must be synthetic or trips, not `{other}`"))),
        };
        let fleet = match kv.get_str("fleet").unwrap_or("auto") {
            "auto" => FleetChoice::Auto {
                margin: kv.get_or("fleet_margin", 0.15)?,
            },
            v => FleetChoice::Fixed(v.parse().map_err(|e| Error::input(format!("fleet = {v}: {e}")))?),
        };
        let initial = match kv.get_str("initial").unwrap_or("uniform") {
            "uniform" => InitialChoice::Uniform,
            "seed" => InitialChoice::OfflineSeed,
            v => InitialChoice::Explicit(
                v.split(',')
                    .map(|x| x.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::input(format!("initial = {v}: expected uniform, seed or a count list ({e})")))?,
            ),
        };
        let controllers = match kv.get_list::<String>("controllers")? {
            None => d.controllers.clone(),
            Some(names) => names
                .iter()
                .map(|n| n.parse().map_err(Error::Input))
                .collect::<Result<Vec<_>>>()?,
        };
        let cfg = ExperimentConfig {
            mode: match kv.get_str("mode") {
                None => d.mode,
                Some(m) => m.parse().map_err(Error::Input)?,
            },
            source,
            seed: kv.get_or("seed", d.seed)?,
            delta_t: kv.get_or("delta_t", d.delta_t)?,
            tick: kv.get_or("tick", d.tick)?,
            steps: kv.get_or("steps", d.steps)?,
            window_start: kv.get_or("window_start", d.window_start)?,
            planning_horizon,
            t_forward: kv.get_or("t_forward", d.t_forward)?,
            t_back: kv.get_or("t_back", d.t_back)?,
            costs,
            fleet,
            initial,
            controllers,
            ha_period: kv.get_or("ha.period", d.ha_period)?,
            ha_train_days: kv.get_or("ha.train_days", d.ha_train_days)?,
            ha_history: kv.get("ha.history")?,
            forecast_file: kv.get("forecast_file")?,
            mpc_time_limit: Duration::from_secs_f64(kv.get_or("mpc.time_limit_s", d.mpc_time_limit.as_secs_f64())?),
            mpc_max_nodes: kv.get_or("mpc.max_nodes", d.mpc_max_nodes)?,
            prune: kv.get_or("mpc.prune", d.prune)?,
            allow_fallback: kv.get_or("mpc.allow_fallback", d.allow_fallback)?,
            sweep_t_forward: kv.get_list("sweep.t_forward")?.unwrap_or(d.sweep_t_forward),
            threads: kv.get_or("threads", d.threads)?,
            check_invariants: kv.get_or("check_invariants", d.check_invariants)?,
            out_dir: kv.get_or("out_dir", d.out_dir)?,
        };
        cfg.validate_scenario()?;
        Ok(cfg)
    }

    /// The config as key-value text; `from_kv(to_kv())` is the identity.
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("mode", self.mode.as_str());
        match &self.source {
            ScenarioSource::Synthetic(s) => {
                kv.set("source", "synthetic");
                kv.set("synth.regions", s.regions);
                kv.set("synth.trips", s.trips);
                kv.set("synth.center_fraction", s.center_fraction);
                kv.set("synth.center_radius_m", s.center_radius_m);
                kv.set("synth.ring_radius_m", s.ring_radius_m);
                kv.set("synth.speed_mps", s.speed_mps);
                kv.set("synth.overhead_s", s.overhead_s);
                kv.set("synth.background", s.background);
                kv.set("synth.morning_peak_h", s.morning_peak_h);
                kv.set("synth.evening_peak_h", s.evening_peak_h);
                kv.set("synth.peak_width_h", s.peak_width_h);
                kv.set("synth.asymmetry", s.asymmetry);
                kv.set("synth.period_s", s.period_s);
                kv.set("synth.align_to_step", s.align_to_step);
                kv.set("synth.layout_seed", s.layout_seed);
            }
            ScenarioSource::Trips { path, regions, travel, start } => {
                kv.set("source", "trips");
                kv.set("trips", path.display());
                if let Some(r) = regions {
                    kv.set("regions", r.join(","));
                }
                if let Some(t) = travel {
                    kv.set("travel", t.display());
                }
                if let Some(s) = start {
                    kv.set("start_time", s);
                }
            }
        }
        kv.set("seed", self.seed);
        kv.set("delta_t", self.delta_t);
        kv.set("tick", self.tick);
        kv.set("steps", self.steps);
        kv.set("window_start", self.window_start);
        kv.set("planning_horizon", self.planning_horizon);
        kv.set("t_forward", self.t_forward);
        kv.set("t_back", self.t_back);
        kv.set("cost.reb_per_step", self.costs.reb_per_step);
        kv.set("cost.idle_per_step", self.costs.idle_per_step);
        kv.set("cost.drop", self.costs.drop);
        match self.fleet {
            FleetChoice::Fixed(m) => kv.set("fleet", m),
            FleetChoice::Auto { margin } => {
                kv.set("fleet", "auto");
                kv.set("fleet_margin", margin);
            }
        }
        match &self.initial {
            InitialChoice::Uniform => kv.set("initial", "uniform"),
            InitialChoice::OfflineSeed => kv.set("initial", "seed"),
            InitialChoice::Explicit(c) => kv.set("initial", join(c)),
        }
        kv.set("controllers", self.controllers.iter().map(|c| c.name()).collect::<Vec<_>>().join(","));
        kv.set("ha.period", self.ha_period);
        kv.set("ha.train_days", self.ha_train_days);
        if let Some(p) = &self.ha_history {
            kv.set("ha.history", p.display());
        }
        if let Some(p) = &self.forecast_file {
            kv.set("forecast_file", p.display());
        }
        kv.set("mpc.time_limit_s", self.mpc_time_limit.as_secs_f64());
        kv.set("mpc.max_nodes", self.mpc_max_nodes);
        kv.set("mpc.prune", self.prune);
        kv.set("mpc.allow_fallback", self.allow_fallback);
        kv.set("sweep.t_forward", join(&self.sweep_t_forward));
        kv.set("threads", self.threads);
        kv.set("check_invariants", self.check_invariants);
        kv.set("out_dir", self.out_dir.display());
        kv
    }

    /// Checks everything a run needs.
    pub fn validate(&self) -> Result<()> {
        let mut problems = self.scenario_problems();
        if self.mode == Mode::Sweep {
            for &tf in &self.sweep_t_forward {
                problems.extend(self.horizon_problem(tf));
            }
        }
        if self.controllers.is_empty() {
            problems.push("no controllers requested".into());
        }
        if self.threads == 0 {
            problems.push("threads must be at least 1".into());
        }
        if self.ha_period == 0 {
            problems.push("ha.period must be positive".into());
        }
        if let FleetChoice::Auto { margin } = self.fleet {
            if !(margin >= 0.0) {
                problems.push("fleet_margin must be nonnegative".into());
            }
        }
        if self.controllers.contains(&ControllerChoice::Mpc(ForecastChoice::File)) && self.forecast_file.is_none() {
            problems.push("mpc-file needs forecast_file".into());
        }
        let ha = self.controllers.contains(&ControllerChoice::Mpc(ForecastChoice::HistoricalAverage));
        if ha && matches!(self.source, ScenarioSource::Trips { .. }) && self.ha_history.is_none() {
            problems.push("mpc-ha on a trip log needs ha.history".into());
        }
        if ha && matches!(self.source, ScenarioSource::Synthetic(_)) && self.ha_train_days == 0 {
            problems.push("mpc-ha needs ha.train_days >= 1".into());
        }
        for p in [&self.ha_history, &self.forecast_file].into_iter().flatten() {
            if !p.exists() {
                problems.push(format!("{} does not exist", p.display()));
            }
        }
        report(problems)
    }

    /// Checks the horizons and what loading or generating the scenario needs.
    pub fn validate_scenario(&self) -> Result<()> {
        report(self.scenario_problems())
    }

    fn horizon_problem(&self, tf: usize) -> Option<String> {
        (tf == 0 || tf > self.planning_horizon)
            .then(|| format!("t_forward {tf} must lie in 1..=planning_horizon ({})", self.planning_horizon))
    }

    fn scenario_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.planning_horizon == 0 || self.steps == 0 {
            problems.push("planning_horizon and steps must be positive".to_string());
        }
        problems.extend(self.horizon_problem(self.t_forward));
        if let ScenarioSource::Trips { path, travel, .. } = &self.source {
            for p in std::iter::once(path).chain(travel) {
                if !p.exists() {
                    problems.push(format!("{} does not exist", p.display()));
                }
            }
        }
        if let Err(e) = TimeGrid::new(self.delta_t, self.steps.max(1), self.tick) {
            problems.push(e.to_string());
        }
        problems
    }

    pub fn load(path: &Path, overrides: &KvConfig) -> Result<Self> {
        let mut kv = KvConfig::load(path)?;
        kv.merge(overrides);
        Self::from_kv(&kv)
    }

    fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.delta_t, self.steps, self.tick)
    }

    fn mpc_settings(&self) -> MpcSettings {
        MpcSettings {
            horizon: self.planning_horizon,
            limits: MilpLimits {
                max_nodes: self.mpc_max_nodes,
                time_limit: self.mpc_time_limit,
            },
            prune: self.prune,
            allow_fallback: self.allow_fallback,
        }
    }
}

fn report(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::input(problems.join("; ")))
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Scenario and trip log of the simulated window, with request times
/// relative to its start.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub log: TripLog,
    /// Trips outside the region set.
    pub dropped: usize,
    /// Source wall time of step 1 of the source period (before the window
    /// offset).
    pub start_time: u64,
}

/// Loads or generates the scenario of `cfg`.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let grid = cfg.grid()?;
    let offset = cfg.window_start as u64 * cfg.delta_t as u64;
    match &cfg.source {
        ScenarioSource::Synthetic(spec) => {
            let day = TimeGrid::new(cfg.delta_t, cfg.window_start + cfg.steps, cfg.tick)?;
            let (s, mut log) = generate_synthetic(spec, &day, cfg.seed)?;
            log.rebase(offset);
            let scenario = Scenario {
                demand: log.demand(&grid),
                grid,
                costs: CostModel::from_travel(&s.travel, cfg.costs, cfg.planning_horizon),
                ..s
            };
            Ok(Prepared {
                scenario,
                log,
                dropped: 0,
                start_time: 0,
            })
        }
        ScenarioSource::Trips { path, regions, travel, start } => {
            let regions = match regions {
                Some(ids) => RegionSet::new(ids.iter().cloned())?,
                None => scan_regions(path)?,
            };
            let (mut log, dropped) = load_trips(path, &regions)?;
            let start = start.unwrap_or_else(|| log.trips.first().map_or(0, |t| t.request_time));
            log.rebase(start);
            let travel = match travel {
                Some(p) => load_travel(p, &regions, &grid)?,
                None => {
                    let (m, report) = build_travel_matrix(&log, regions.len(), &grid)?;
                    log::info!(
                        "travel matrix: {} observed, {} composed, {} global-mean pairs",
                        report.observed,
                        report.composed,
                        report.global_mean
                    );
                    m
                }
            };
            log.rebase(offset);
            let costs = CostModel::from_travel(&travel, cfg.costs, cfg.planning_horizon);
            let scenario = Scenario {
                regions,
                grid,
                travel,
                demand: log.demand(&grid),
                costs,
            };
            Ok(Prepared {
                scenario,
                log,
                dropped,
                start_time: start,
            })
        }
    }
}

/// Builds the forecaster a controller needs, with forward horizon `tf`.
pub fn build_forecaster(cfg: &ExperimentConfig, p: &Prepared, choice: ForecastChoice, tf: usize) -> Result<Forecaster> {
    Ok(match choice {
        ForecastChoice::Oracle => Forecaster::Oracle {
            truth: p.scenario.demand.clone(),
            t_forward: tf,
        },
        ForecastChoice::Zero => Forecaster::Zero { t_forward: tf },
        ForecastChoice::Persistence => Forecaster::Persistence { t_forward: tf },
        ForecastChoice::File => {
            let path = cfg.forecast_file.as_ref().ok_or_else(|| Error::input("mpc-file needs forecast_file"))?;
            Forecaster::File(ForecastFile::load(path, &p.scenario.regions, tf)?)
        }
        ForecastChoice::HistoricalAverage => {
            let mut ha = train_historical_average(cfg, p, tf)?;
            ha.offset = cfg.window_start;
            Forecaster::HistoricalAverage(ha)
        }
    })
}

/// Synthetic sources train on `ha.train_days` further days of the same city
/// (seeds following the evaluated one); trip-log sources on `ha.history`.
fn train_historical_average(cfg: &ExperimentConfig, p: &Prepared, tf: usize) -> Result<HistoricalAverage> {
    let period = cfg.ha_period;
    let grid = TimeGrid::new(cfg.delta_t, period, cfg.tick)?;
    match &cfg.source {
        ScenarioSource::Synthetic(spec) => {
            let days = (1..=cfg.ha_train_days as u64)
                .map(|d| generate_synthetic(spec, &grid, cfg.seed.wrapping_add(d)).map(|(s, _)| s.demand))
                .collect::<Result<Vec<_>>>()?;
            HistoricalAverage::train_periods(&days, period, tf)
        }
        ScenarioSource::Trips { .. } => {
            let path = cfg.ha_history.as_ref().ok_or_else(|| Error::input("mpc-ha needs ha.history"))?;
            let (mut log, _) = load_trips(path, &p.scenario.regions)?;
            // Periods of the history start at the same time of day as the
            // evaluated log.
            let period_s = period as i128 * cfg.delta_t as i128;
            let first = log.trips.first().map_or(0, |t| t.request_time) as i128;
            let anchor = first - (first - p.start_time as i128).rem_euclid(period_s);
            log.rebase(anchor.max(0) as u64);
            let periods = log.trips.last().map_or(1, |t| (t.request_time as i128 / period_s + 1) as usize);
            let long = TimeGrid::new(cfg.delta_t, period * periods, cfg.tick)?;
            HistoricalAverage::train(&log.demand(&long), period, periods, tf)
        }
    }
}

/// Fleet size and initial distribution from the config.
pub fn fleet_for(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<(u32, Option<u64>, InitialDistribution)> {
    let need_offline = matches!(cfg.fleet, FleetChoice::Auto { .. }) || cfg.initial == InitialChoice::OfflineSeed;
    let plan = if need_offline { Some(min_fleet_plan(scenario)?) } else { None };
    let min = plan.as_ref().map(|p| p.fleet_size);
    let fleet = match cfg.fleet {
        FleetChoice::Fixed(m) => m,
        FleetChoice::Auto { margin } => {
            let m = min.expect("offline plan computed for auto fleet") as f64;
            (m * (1.0 + margin) - 1e-9).ceil().max(0.0) as u32
        }
    };
    let initial = match &cfg.initial {
        InitialChoice::Uniform => InitialDistribution::Uniform,
        InitialChoice::OfflineSeed => InitialDistribution::FromSeed(plan.expect("offline plan computed").seed),
        InitialChoice::Explicit(c) => InitialDistribution::Explicit(c.clone()),
    };
    Ok((fleet, min, initial))
}

/// Runs independent jobs on up to `threads` workers; results keep job order
/// and the first error wins.
pub fn run_parallel<J: Sync, T: Send>(jobs: &[J], threads: usize, f: impl Fn(&J) -> Result<T> + Sync) -> Result<Vec<T>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= jobs.len() {
                    break;
                }
                let r = f(&jobs[k]);
                results.lock().expect("no worker panics while holding the lock")[k] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub fleet_size: u32,
    pub min_fleet: Option<u64>,
    pub runs: Vec<MetricsLog>,
    pub sweep: Vec<SweepRow>,
    pub manifest: KvConfig,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn run(&self, label: &str) -> Option<&MetricsLog> {
        self.runs.iter().find(|m| m.controller == label)
    }
}

struct Job {
    label: String,
    controller: Controller,
}

/// Runs the experiment `cfg` describes and writes its reports into
/// `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let p = prepare(cfg)?;
    let (fleet, min_fleet, initial) = fleet_for(cfg, &p.scenario)?;
    log::info!(
        "{} regions, {} trips, fleet {fleet}{}",
        p.scenario.num_regions(),
        p.log.len(),
        min_fleet.map_or(String::new(), |m| format!(" (offline minimum {m})"))
    );

    let horizons: Vec<usize> = match cfg.mode {
        Mode::Sweep => cfg.sweep_t_forward.clone(),
        Mode::Simulate | Mode::Bench => vec![cfg.t_forward],
    };
    let mut jobs = Vec::new();
    for &choice in &cfg.controllers {
        let forecast_horizons: &[usize] = if choice.uses_forecast() { &horizons } else { &horizons[..1] };
        for &tf in forecast_horizons {
            let controller = match choice {
                ControllerChoice::Mpc(f) => Controller::Mpc {
                    forecaster: build_forecaster(cfg, &p, f, tf)?,
                    settings: cfg.mpc_settings(),
                },
                ControllerChoice::TvReactive => Controller::TvReactive {
                    settings: cfg.mpc_settings(),
                },
                ControllerChoice::Reactive => Controller::Reactive,
                ControllerChoice::None => Controller::None,
            };
            let label = if cfg.mode == Mode::Sweep && choice.uses_forecast() {
                format!("{}-tf{tf}", choice.name())
            } else {
                choice.name().to_string()
            };
            jobs.push(Job { label, controller });
        }
    }

    let runs = run_parallel(&jobs, cfg.threads, |job| {
        let sim = SimConfig {
            fleet_size: fleet,
            initial: initial.clone(),
            controller: job.controller.clone(),
            seed: cfg.seed,
            check_invariants: cfg.check_invariants,
        };
        let mut m = run(&p.scenario, &p.log, &sim)?;
        m.controller = job.label.clone();
        Ok(m)
    })?;

    let sweep: Vec<SweepRow> = if cfg.mode == Mode::Sweep {
        jobs.iter()
            .zip(&runs)
            .filter_map(|(job, m)| {
                let tf = job.label.rsplit_once("-tf").and_then(|(_, tf)| tf.parse().ok())?;
                let w = m.wait_summary();
                Some(SweepRow {
                    controller: job.label.rsplit_once("-tf").map(|(c, _)| c.to_string()).unwrap_or_default(),
                    t_forward: tf,
                    mean_wait_s: w.mean,
                    median_wait_s: w.median,
                    p95_wait_s: w.p95,
                })
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut manifest = cfg.to_kv();
    manifest.set("result.regions", p.scenario.num_regions());
    manifest.set("result.trips", p.log.len());
    manifest.set("result.dropped_trips", p.dropped);
    manifest.set("result.fleet_size", fleet);
    if let Some(m) = min_fleet {
        manifest.set("result.min_fleet", m);
    }
    for m in &runs {
        let w = m.wait_summary();
        let key = |k: &str| format!("result.{}.{k}", m.controller);
        manifest.set(key("mean_wait_s"), format!("{:.3}", w.mean));
        manifest.set(key("unserved"), w.unserved);
        manifest.set(key("reb_trips"), m.reb_trips);
        if !m.solves.is_empty() {
            let mut t: Vec<f64> = m.solves.iter().map(|r| r.wall_time.as_secs_f64()).collect();
            manifest.set(key("solve_wall_s"), t.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(","));
            t.sort_by(f64::total_cmp);
            manifest.set(key("solve_mean_s"), format!("{:.4}", t.iter().sum::<f64>() / t.len() as f64));
            manifest.set(key("solve_median_s"), format!("{:.4}", median(&t)));
            manifest.set(key("solve_max_s"), format!("{:.4}", t[t.len() - 1]));
            manifest.set(key("fallbacks"), m.solves.iter().filter(|r| r.fallback).count());
        }
    }
    manifest.set("result.wall_time_s", format!("{:.2}", started.elapsed().as_secs_f64()));

    let files = write_reports(cfg, &runs, &sweep, &manifest)?;
    Ok(ExperimentReport {
        fleet_size: fleet,
        min_fleet,
        runs,
        sweep,
        manifest,
        files,
    })
}

pub fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2],
        n => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
    }
}

fn write_reports(cfg: &ExperimentConfig, runs: &[MetricsLog], sweep: &[SweepRow], manifest: &KvConfig) -> Result<Vec<PathBuf>> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let summary = dir.join("summary.csv");
    write_summary(&summary, runs)?;
    files.push(summary);
    for m in runs {
        let series = dir.join(format!("series_{}.csv", m.controller));
        write_series(&series, m)?;
        files.push(series);
        if !m.solves.is_empty() {
            let solves = dir.join(format!("solves_{}.csv", m.controller));
            write_solves(&solves, m)?;
            files.push(solves);
        }
    }
    if cfg.mode == Mode::Bench {
        let path = dir.join("bench.csv");
        write_bench(&path, runs)?;
        files.push(path);
    }
    if cfg.mode == Mode::Sweep {
        let path = dir.join("sweep.csv");
        write_sweep(&path, sweep)?;
        files.push(path);
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest.to_string()).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(files)
}
