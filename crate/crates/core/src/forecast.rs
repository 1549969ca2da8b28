//! Demand forecasters for the MPC controller.
//!
//! A forecast made at epoch `t0` (the number of completed steps) covers
//! relative steps `1..=t_forward`; relative step `k` is absolute step `t0 + k`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DemandSet, RegionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Oracle,
    ModelFile,
    HistoricalAverage,
    Persistence,
    Zero,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Oracle => "oracle",
            Provenance::ModelFile => "model-file",
            Provenance::HistoricalAverage => "historical-average",
            Provenance::Persistence => "persistence",
            Provenance::Zero => "zero",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forecast {
    pub t0: usize,
    pub t_forward: usize,
    pub provenance: Provenance,
    // Keyed by (k, i, j) with k the relative step.
    entries: BTreeMap<(usize, usize, usize), u32>,
}

impl Forecast {
    pub fn empty(t0: usize, t_forward: usize, provenance: Provenance) -> Self {
        Forecast {
            t0,
            t_forward,
            provenance,
            entries: BTreeMap::new(),
        }
    }

    /// Sets `λ̂_ijk`; entries outside `1..=t_forward` are ignored.
    pub fn set(&mut self, i: usize, j: usize, k: usize, count: u32) {
        if k == 0 || k > self.t_forward {
            return;
        }
        if count == 0 {
            self.entries.remove(&(k, i, j));
        } else {
            self.entries.insert((k, i, j), count);
        }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> u32 {
        self.entries.get(&(k, i, j)).copied().unwrap_or(0)
    }

    /// Nonzero entries as `(i, j, k, count)`, ordered by relative step.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, u32)> + '_ {
        self.entries.iter().map(|(&(k, i, j), &c)| (i, j, k, c))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.entries.values().map(|&c| c as u64).sum()
    }

    /// Same forecast with relative steps past `t_forward` removed.
    pub fn truncated(&self, t_forward: usize) -> Forecast {
        let mut out = Forecast::empty(self.t0, t_forward.min(self.t_forward), self.provenance);
        for (i, j, k, c) in self.iter() {
            out.set(i, j, k, c);
        }
        out
    }
}

/// Rounds half-up; negative and non-finite values are rejected.
pub fn round_demand(v: f64) -> Result<u32> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::input(format!("forecast demand {v} must be a nonnegative number")));
    }
    Ok((v + 0.5).floor() as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForecasterKind {
    Oracle,
    Zero,
    HistoricalAverage { period: usize },
    Persistence,
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterSpec {
    pub kind: ForecasterKind,
    pub t_back: usize,
    pub t_forward: usize,
}

impl ForecasterSpec {
    pub fn new(kind: ForecasterKind, t_forward: usize) -> Self {
        ForecasterSpec { kind, t_back: 0, t_forward }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_forward == 0 {
            return Err(Error::input("t_forward must be at least 1"));
        }
        if let ForecasterKind::HistoricalAverage { period: 0 } = self.kind {
            return Err(Error::input("averaging period must be at least 1"));
        }
        Ok(())
    }
}

/// A ready-to-query forecaster.
#[derive(Debug, Clone)]
pub enum Forecaster {
    /// Returns the true future demand.
    Oracle { truth: DemandSet, t_forward: usize },
    Zero { t_forward: usize },
    HistoricalAverage(HistoricalAverage),
    /// Repeats the demand of the last completed step.
    Persistence { t_forward: usize },
    File(ForecastFile),
}

impl Forecaster {
    pub fn t_forward(&self) -> usize {
        match self {
            Forecaster::Oracle { t_forward, .. } | Forecaster::Zero { t_forward } | Forecaster::Persistence { t_forward } => {
                *t_forward
            }
            Forecaster::HistoricalAverage(h) => h.t_forward,
            Forecaster::File(f) => f.t_forward,
        }
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            Forecaster::Oracle { .. } => Provenance::Oracle,
            Forecaster::Zero { .. } => Provenance::Zero,
            Forecaster::HistoricalAverage(_) => Provenance::HistoricalAverage,
            Forecaster::Persistence { .. } => Provenance::Persistence,
            Forecaster::File(_) => Provenance::ModelFile,
        }
    }

    /// Forecast at epoch `t0` given the demand observed so far (`history`
    /// must cover steps up to `t0` for the forecasters that read it).
    pub fn forecast(&self, history: &DemandSet, t0: usize) -> Result<Forecast> {
        let tf = self.t_forward();
        let mut fc = Forecast::empty(t0, tf, self.provenance());
        match self {
            Forecaster::Oracle { truth, .. } => {
                for (i, j, t, c) in truth.window(t0 + 1, t0 + tf) {
                    fc.set(i, j, t - t0, c);
                }
            }
            Forecaster::Zero { .. } => {}
            Forecaster::HistoricalAverage(h) => {
                for k in 1..=tf {
                    if let Some(cells) = h.by_slot.get(&h.slot(t0 + k)) {
                        for &(i, j, c) in cells {
                            fc.set(i, j, k, c);
                        }
                    }
                }
            }
            Forecaster::Persistence { .. } => {
                if t0 >= 1 {
                    for (i, j, _, c) in history.window(t0, t0) {
                        for k in 1..=tf {
                            fc.set(i, j, k, c);
                        }
                    }
                }
            }
            Forecaster::File(f) => {
                let block = f
                    .blocks
                    .get(&t0)
                    .ok_or_else(|| Error::input(format!("{}: no forecast block for t0 = {t0}", f.path.display())))?;
                for &(t, i, j, c) in block {
                    if t > t0 {
                        fc.set(i, j, t - t0, c);
                    }
                }
            }
        }
        Ok(fc)
    }
}

/// Mean demand per `(slot, i, j)` over whole training periods. Per-cell means
/// are mostly well below one, so integer counts come from rounding the running
/// total of each pair's means through the period half-up; each slot gets the
/// increment. The period volume of every pair survives rounding.
#[derive(Debug, Clone)]
pub struct HistoricalAverage {
    pub period: usize,
    pub t_forward: usize,
    /// Slot of step 1; nonzero when the simulation starts mid-period.
    pub offset: usize,
    by_slot: HashMap<usize, Vec<(usize, usize, u32)>>,
}

impl HistoricalAverage {
    /// `log` holds `num_periods` consecutive periods, step `1` being the
    /// first slot of the first period.
    pub fn train(log: &DemandSet, period: usize, num_periods: usize, t_forward: usize) -> Result<Self> {
        if period == 0 || num_periods == 0 {
            return Err(Error::input("historical average needs a positive period and at least one period"));
        }
        let mut sums: BTreeMap<(usize, usize, usize), u64> = BTreeMap::new();
        for (i, j, t, c) in log.iter() {
            if t == 0 || t > period * num_periods {
                continue;
            }
            *sums.entry((i, j, (t - 1) % period)).or_insert(0) += c as u64;
        }
        let mut by_slot: HashMap<usize, Vec<(usize, usize, u32)>> = HashMap::new();
        let mut pair = None;
        let (mut total, mut emitted) = (0u64, 0u32);
        for ((i, j, slot), sum) in sums {
            if pair != Some((i, j)) {
                pair = Some((i, j));
                total = 0;
                emitted = 0;
            }
            total += sum;
            let upto = round_demand(total as f64 / num_periods as f64)?;
            if upto > emitted {
                by_slot.entry(slot).or_default().push((i, j, upto - emitted));
                emitted = upto;
            }
        }
        Ok(HistoricalAverage {
            period,
            t_forward,
            offset: 0,
            by_slot,
        })
    }

    /// Trains on separate period logs, each indexed from step 1.
    pub fn train_periods(periods: &[DemandSet], period: usize, t_forward: usize) -> Result<Self> {
        let mut joined = DemandSet::new();
        for (p, log) in periods.iter().enumerate() {
            for (i, j, t, c) in log.iter() {
                if t >= 1 && t <= period {
                    joined.add(i, j, p * period + t, c);
                }
            }
        }
        Self::train(&joined, period, periods.len(), t_forward)
    }

    fn slot(&self, t: usize) -> usize {
        (t.max(1) - 1 + self.offset) % self.period
    }
}

/// Forecast blocks read from a CSV file, keyed by epoch.
#[derive(Debug, Clone)]
pub struct ForecastFile {
    pub path: PathBuf,
    pub t_forward: usize,
    blocks: BTreeMap<usize, Vec<(usize, usize, usize, u32)>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ForecastRecord {
    t0: usize,
    t: usize,
    origin: String,
    destination: String,
    demand: f64,
}

impl ForecastFile {
    pub fn load(path: &Path, regions: &RegionSet, t_forward: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let expected = ["t0", "t", "origin", "destination", "demand"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::input(format!(
                "{}: forecast header must be {}",
                path.display(),
                expected.join(",")
            )));
        }
        let mut blocks: BTreeMap<usize, Vec<(usize, usize, usize, u32)>> = BTreeMap::new();
        for (line, rec) in reader.deserialize::<ForecastRecord>().enumerate() {
            let line = line + 2;
            let rec = rec.map_err(|e| Error::input(format!("{}:{line}: {e}", path.display())))?;
            let lookup = |id: &str| {
                regions
                    .position(id)
                    .ok_or_else(|| Error::input(format!("{}:{line}: unknown region {id:?}", path.display())))
            };
            let (i, j) = (lookup(&rec.origin)?, lookup(&rec.destination)?);
            if rec.t <= rec.t0 {
                return Err(Error::input(format!(
                    "{}:{line}: target step {} is not after t0 {}",
                    path.display(),
                    rec.t,
                    rec.t0
                )));
            }
            let c = round_demand(rec.demand).map_err(|e| Error::input(format!("{}:{line}: {e}", path.display())))?;
            let block = blocks.entry(rec.t0).or_default();
            if c > 0 {
                block.push((rec.t, i, j, c));
            }
        }
        Ok(ForecastFile {
            path: path.to_path_buf(),
            t_forward,
            blocks,
        })
    }

    pub fn epochs(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.keys().copied()
    }
}

/// Writes forecasts in the `t0,t,origin,destination,demand` format.
pub fn write_forecasts(path: &Path, forecasts: &[Forecast], regions: &RegionSet) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    w.write_record(["t0", "t", "origin", "destination", "demand"])
        .map_err(|e| Error::csv(path, e))?;
    for fc in forecasts {
        for (i, j, k, c) in fc.iter() {
            w.serialize(ForecastRecord {
                t0: fc.t0,
                t: fc.t0 + k,
                origin: regions.id(i).to_string(),
                destination: regions.id(j).to_string(),
                demand: c as f64,
            })
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastError {
    pub mae: f64,
    pub rmse: f64,
    /// `(mae, rmse)` for each relative step.
    pub per_step: Vec<(f64, f64)>,
}

/// Errors over every `(i, j, k)` cell of the forecast window.
pub fn evaluate_forecast(fc: &Forecast, truth: &DemandSet, num_regions: usize, horizon: usize) -> Result<ForecastError> {
    if fc.t0 + fc.t_forward > horizon {
        return Err(Error::input(format!(
            "forecast window {}..={} runs past the horizon {horizon}",
            fc.t0 + 1,
            fc.t0 + fc.t_forward
        )));
    }
    if let Some((i, j, _, _)) = fc.iter().find(|&(i, j, _, _)| i >= num_regions || j >= num_regions) {
        return Err(Error::input(format!("forecast references region pair ({i},{j}) outside {num_regions} regions")));
    }
    let cells = (num_regions * num_regions) as f64;
    let mut per_step = Vec::with_capacity(fc.t_forward);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for k in 1..=fc.t_forward {
        let (mut a, mut s) = (0.0, 0.0);
        for i in 0..num_regions {
            for j in 0..num_regions {
                let e = fc.get(i, j, k) as f64 - truth.get(i, j, fc.t0 + k) as f64;
                a += e.abs();
                s += e * e;
            }
        }
        abs_sum += a;
        sq_sum += s;
        per_step.push((a / cells, (s / cells).sqrt()));
    }
    let total = cells * fc.t_forward as f64;
    Ok(ForecastError {
        mae: abs_sum / total,
        rmse: (sq_sum / total).sqrt(),
        per_step,
    })
}
