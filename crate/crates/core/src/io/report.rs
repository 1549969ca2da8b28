//! CSV reports of simulation runs and plans.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::RegionSet;
use crate::offline::PlanRow;
use crate::sim::MetricsLog;

pub const SUMMARY_HEADER: [&str; 6] = [
    "controller",
    "mean_wait_s",
    "median_wait_s",
    "p95_wait_s",
    "total_reb_tasks",
    "total_reb_vehicle_steps",
];

struct Table<'a> {
    path: &'a Path,
    w: csv::Writer<File>,
}

impl<'a> Table<'a> {
    fn create(path: &'a Path, header: &[&str]) -> Result<Self> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        w.write_record(header).map_err(|e| Error::csv(path, e))?;
        Ok(Table { path, w })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(|e| Error::csv(self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(self.path, e))
    }
}

/// Wait times print with millisecond precision so reports compare bytewise.
fn secs(v: f64) -> String {
    format!("{v:.3}")
}

/// One row per run.
pub fn write_summary(path: &Path, runs: &[MetricsLog]) -> Result<()> {
    let mut t = Table::create(path, &SUMMARY_HEADER)?;
    for m in runs {
        let w = m.wait_summary();
        t.row([
            m.controller.clone(),
            secs(w.mean),
            secs(w.median),
            secs(w.p95),
            m.tasks_issued.to_string(),
            m.reb_vehicle_steps.to_string(),
        ])?;
    }
    t.finish()
}

/// Per-tick state of one run.
pub fn write_series(path: &Path, m: &MetricsLog) -> Result<()> {
    let mut t = Table::create(
        path,
        &["tick", "time_s", "idle", "serving", "rebalancing", "waiting", "arrived", "delivered", "tasks_issued", "reb_departures"],
    )?;
    let s = &m.series;
    for k in 0..s.idle.len() {
        t.row([
            k.to_string(),
            (k as u64 * m.tick_seconds as u64).to_string(),
            s.idle[k].to_string(),
            s.serving[k].to_string(),
            s.rebalancing[k].to_string(),
            s.waiting[k].to_string(),
            s.arrived[k].to_string(),
            s.delivered[k].to_string(),
            s.tasks_issued[k].to_string(),
            s.reb_departures[k].to_string(),
        ])?;
    }
    t.finish()
}

/// Controller solves of one run, one row per epoch.
pub fn write_solves(path: &Path, m: &MetricsLog) -> Result<()> {
    let mut t = Table::create(
        path,
        &["t0", "wall_time_s", "nodes", "iterations", "status", "gap", "num_vars", "num_rows", "fallback"],
    )?;
    for r in &m.solves {
        t.row([
            r.t0.to_string(),
            format!("{:.6}", r.wall_time.as_secs_f64()),
            r.nodes.to_string(),
            r.iterations.to_string(),
            r.status.to_string(),
            format!("{:.3e}", r.gap),
            r.num_vars.to_string(),
            r.num_rows.to_string(),
            r.fallback.to_string(),
        ])?;
    }
    t.finish()
}

pub fn write_plan(path: &Path, rows: &[PlanRow], regions: &RegionSet) -> Result<()> {
    let mut t = Table::create(path, &["i", "j", "t", "kind", "count"])?;
    for r in rows {
        t.row([
            regions.id(r.i).to_string(),
            regions.id(r.j).to_string(),
            r.t.to_string(),
            r.kind.as_str().to_string(),
            r.count.to_string(),
        ])?;
    }
    t.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub controller: String,
    pub t_forward: usize,
    pub mean_wait_s: f64,
    pub median_wait_s: f64,
    pub p95_wait_s: f64,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut t = Table::create(path, &["controller", "t_forward", "mean_wait_s", "median_wait_s", "p95_wait_s"])?;
    for r in rows {
        t.row([
            r.controller.clone(),
            r.t_forward.to_string(),
            secs(r.mean_wait_s),
            secs(r.median_wait_s),
            secs(r.p95_wait_s),
        ])?;
    }
    t.finish()
}

/// Solve-time statistics per run, for runs with controller solves.
pub fn write_bench(path: &Path, runs: &[MetricsLog]) -> Result<()> {
    let mut t = Table::create(
        path,
        &["controller", "epochs", "mean_s", "median_s", "max_s", "mean_vars", "mean_rows", "fallbacks"],
    )?;
    for m in runs.iter().filter(|m| !m.solves.is_empty()) {
        let mut secs: Vec<f64> = m.solves.iter().map(|r| r.wall_time.as_secs_f64()).collect();
        secs.sort_by(f64::total_cmp);
        let n = secs.len() as f64;
        let mid = if secs.len() % 2 == 1 {
            secs[secs.len() / 2]
        } else {
            (secs[secs.len() / 2 - 1] + secs[secs.len() / 2]) / 2.0
        };
        t.row([
            m.controller.clone(),
            secs.len().to_string(),
            format!("{:.4}", secs.iter().sum::<f64>() / n),
            format!("{mid:.4}"),
            format!("{:.4}", secs[secs.len() - 1]),
            format!("{:.1}", m.solves.iter().map(|r| r.num_vars as f64).sum::<f64>() / n),
            format!("{:.1}", m.solves.iter().map(|r| r.num_rows as f64).sum::<f64>() / n),
            m.solves.iter().filter(|r| r.fallback).count().to_string(),
        ])?;
    }
    t.finish()
}

/// Reads back the rows of a summary file as `(controller, mean, median, p95, tasks, steps)`.
pub fn read_summary(path: &Path) -> Result<Vec<(String, f64, f64, f64, u64, u64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != SUMMARY_HEADER {
        return Err(Error::input(format!("{}: not a summary file", path.display())));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}
