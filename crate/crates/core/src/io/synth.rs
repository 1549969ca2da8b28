//! Synthetic two-peak commuter city.
//!
//! Center regions sit near the origin, suburbs on a ring around them. Request
//! times follow a background rate plus Gaussian rush hours in the morning and
//! evening; the morning rush leans suburb-to-center and the evening rush the
//! other way. Trip durations equal the travel-time matrix.

use std::f64::consts::TAU;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::trips::{TripLog, TripRecord};
use crate::model::{travel_steps, validate, CostModel, CostParams, RegionSet, Scenario, TimeGrid, TravelTimeMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub regions: usize,
    /// Exact number of trips generated.
    pub trips: usize,
    /// Share of regions placed in the center.
    pub center_fraction: f64,
    pub center_radius_m: f64,
    pub ring_radius_m: f64,
    pub speed_mps: f64,
    /// Fixed pickup/dropoff time added to every trip.
    pub overhead_s: f64,
    /// Request intensity outside the rush hours, relative to a peak.
    pub background: f64,
    pub morning_peak_h: f64,
    pub evening_peak_h: f64,
    pub peak_width_h: f64,
    /// 0 gives a symmetric OD pattern; 1 makes the rush hours one-directional.
    pub asymmetry: f64,
    /// Length of the generated period; requests fall in `[0, period_s)`.
    pub period_s: u32,
    /// Snap request times to interval starts and travel times to whole intervals.
    pub align_to_step: bool,
    pub costs: CostParams,
    /// Horizon used to price waiting in the cost model.
    pub planning_horizon: usize,
    /// Seeds the region layout; the per-call seed only drives the trips, so
    /// different seeds give different days in the same city.
    pub layout_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            regions: 10,
            trips: 5000,
            center_fraction: 0.2,
            center_radius_m: 1500.0,
            ring_radius_m: 6000.0,
            speed_mps: 8.0,
            overhead_s: 120.0,
            background: 0.25,
            morning_peak_h: 8.0,
            evening_peak_h: 18.0,
            peak_width_h: 1.5,
            asymmetry: 0.8,
            period_s: 86_400,
            align_to_step: false,
            costs: CostParams::default(),
            planning_horizon: 50,
            layout_seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.regions < 2 {
            problems.push("at least 2 regions".to_string());
        }
        if !(0.0..=1.0).contains(&self.center_fraction) {
            problems.push("center_fraction must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.asymmetry) {
            problems.push("asymmetry must lie in [0, 1]".into());
        }
        if !(self.speed_mps > 0.0) || !(self.peak_width_h > 0.0) {
            problems.push("speed and peak width must be positive".into());
        }
        if self.background < 0.0 || self.overhead_s < 0.0 || self.center_radius_m < 0.0 || self.ring_radius_m < 0.0 {
            problems.push("background, overhead and radii must be nonnegative".into());
        }
        if self.period_s == 0 || self.planning_horizon == 0 {
            problems.push("period and planning horizon must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::input(format!("synthetic spec: {}", problems.join("; "))))
        }
    }

    fn num_center(&self) -> usize {
        ((self.regions as f64 * self.center_fraction).round() as usize).clamp(1, self.regions - 1)
    }
}

/// Generates the city and one period of trips. Deterministic in `seed`.
pub fn generate_synthetic(spec: &SynthSpec, grid: &TimeGrid, seed: u64) -> Result<(Scenario, TripLog)> {
    spec.validate()?;
    let n = spec.regions;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.layout_seed);
    let centers = spec.num_center();

    let mut pos = Vec::with_capacity(n);
    for _ in 0..centers {
        let r = spec.center_radius_m * rng.random::<f64>().sqrt();
        let a = TAU * rng.random::<f64>();
        pos.push((r * a.cos(), r * a.sin()));
    }
    let suburbs = n - centers;
    for k in 0..suburbs {
        let a = TAU * (k as f64 + 0.3 * rng.random::<f64>()) / suburbs as f64;
        let r = spec.ring_radius_m * (0.85 + 0.3 * rng.random::<f64>());
        pos.push((r * a.cos(), r * a.sin()));
    }
    let dist = |i: usize, j: usize| ((pos[i].0 - pos[j].0).powi(2) + (pos[i].1 - pos[j].1).powi(2)).sqrt();

    let mut seconds = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let s = (dist(i, j) / spec.speed_mps + spec.overhead_s).round();
                seconds[i * n + j] = if spec.align_to_step {
                    (travel_steps(s, grid) * grid.delta_t as usize) as f64
                } else {
                    s
                };
            }
        }
    }
    let travel = TravelTimeMatrix::from_seconds(n, seconds, grid)?;

    let is_center = |i: usize| i < centers;
    let mass = |i: usize| if is_center(i) { 3.0 } else { 1.0 };
    // +1 into the center, -1 out of it.
    let direction = |i: usize, j: usize| match (is_center(i), is_center(j)) {
        (false, true) => 1.0,
        (true, false) => -1.0,
        _ => 0.0,
    };
    let base = |i: usize, j: usize| mass(i) * mass(j) / (1.0 + dist(i, j) / 1000.0);

    let hours = |s: f64| s / 3600.0;
    let bump = |h: f64, peak: f64| (-(h - peak).powi(2) / (2.0 * spec.peak_width_h.powi(2))).exp();
    let minutes = (spec.period_s as usize).div_ceil(60);
    let intensity: Vec<f64> = (0..minutes)
        .map(|m| {
            let h = hours(m as f64 * 60.0 + 30.0);
            spec.background + bump(h, spec.morning_peak_h) + bump(h, spec.evening_peak_h)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trips = Vec::with_capacity(spec.trips);
    if spec.trips > 0 {
        let minute_dist = WeightedIndex::new(&intensity).map_err(|e| Error::input(format!("synthetic intensity: {e}")))?;
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    pairs.push((i, j));
                }
            }
        }
        // OD tables per 15-minute block keep sampling cheap.
        let block_s = 900usize;
        let blocks = (spec.period_s as usize).div_ceil(block_s);
        let od: Vec<WeightedIndex<f64>> = (0..blocks)
            .map(|b| {
                let h = hours((b * block_s) as f64 + block_s as f64 / 2.0);
                let tilt = bump(h, spec.morning_peak_h) - bump(h, spec.evening_peak_h);
                let w: Vec<f64> = pairs
                    .iter()
                    .map(|&(i, j)| base(i, j) * (1.0 + spec.asymmetry * tilt * direction(i, j)).max(0.0) + 1e-12)
                    .collect();
                WeightedIndex::new(&w).expect("positive OD weights")
            })
            .collect();
        for _ in 0..spec.trips {
            let minute = minute_dist.sample(&mut rng);
            let mut t = (minute * 60 + rng.random_range(0..60)) as u64;
            t = t.min(spec.period_s as u64 - 1);
            if spec.align_to_step {
                t -= t % grid.delta_t as u64;
            }
            let (i, j) = pairs[od[t as usize / block_s].sample(&mut rng)];
            trips.push(TripRecord {
                request_time: t,
                origin: i,
                destination: j,
                duration_s: travel.seconds(i, j),
            });
        }
    }
    let log = TripLog::new(trips);
    let regions = RegionSet::new((0..n).map(|k| if is_center(k) { format!("c{k}") } else { format!("s{k}") }))?;
    let costs = CostModel::from_travel(&travel, spec.costs, spec.planning_horizon);
    let scenario = Scenario {
        regions,
        grid: *grid,
        demand: log.demand(grid),
        travel,
        costs,
    };
    debug_assert!(validate(&scenario).is_empty());
    Ok((scenario, log))
}
