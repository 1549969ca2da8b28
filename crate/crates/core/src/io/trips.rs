//! Trip log CSV: `request_time,origin,destination,duration_s`.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{quantize, DemandSet, RegionSet, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    /// Seconds since the start of the simulated period.
    pub request_time: u64,
    pub origin: usize,
    pub destination: usize,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripLog {
    /// Sorted by request time (stable, so ties keep file order).
    pub trips: Vec<TripRecord>,
}

impl TripLog {
    pub fn new(mut trips: Vec<TripRecord>) -> Self {
        trips.sort_by_key(|t| t.request_time);
        TripLog { trips }
    }

    pub fn len(&self) -> usize {
        self.trips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trips.is_empty()
    }

    /// Customer counts per `(origin, destination, step)`. Requests past the
    /// horizon are left out.
    pub fn demand(&self, grid: &TimeGrid) -> DemandSet {
        let mut d = DemandSet::new();
        for trip in &self.trips {
            let t = quantize(trip.request_time as f64, grid).expect("request times are nonnegative");
            if t <= grid.horizon {
                d.add(trip.origin, trip.destination, t, 1);
            }
        }
        d
    }

    /// Shifts request times so that `origin` becomes time zero; earlier
    /// trips are removed.
    pub fn rebase(&mut self, origin: u64) {
        self.trips.retain(|t| t.request_time >= origin);
        for t in &mut self.trips {
            t.request_time -= origin;
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TripRow {
    request_time: u64,
    origin: String,
    destination: String,
    duration_s: f64,
}

const HEADER: [&str; 4] = ["request_time", "origin", "destination", "duration_s"];

/// Reads a trip log, dropping trips whose regions are not in `regions`.
/// Returns the log and the number of dropped rows.
pub fn load_trips(path: &Path, regions: &RegionSet) -> Result<(TripLog, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::input(format!("{}: trip header must be {}", path.display(), HEADER.join(","))));
    }
    let mut trips = Vec::new();
    let mut dropped = 0;
    for (k, row) in reader.deserialize::<TripRow>().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| Error::input(format!("{}:{line}: {e}", path.display())))?;
        if !row.duration_s.is_finite() || row.duration_s < 0.0 {
            return Err(Error::input(format!(
                "{}:{line}: duration {} must be a nonnegative number",
                path.display(),
                row.duration_s
            )));
        }
        match (regions.position(&row.origin), regions.position(&row.destination)) {
            (Some(origin), Some(destination)) => trips.push(TripRecord {
                request_time: row.request_time,
                origin,
                destination,
                duration_s: row.duration_s,
            }),
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} trips outside the region set", path.display());
    }
    Ok((TripLog::new(trips), dropped))
}

/// Region ids in order of first appearance in a trip file.
pub fn scan_regions(path: &Path) -> Result<RegionSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut ids: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (k, row) in reader.deserialize::<TripRow>().enumerate() {
        let row = row.map_err(|e| Error::input(format!("{}:{}: {e}", path.display(), k + 2)))?;
        for id in [row.origin, row.destination] {
            if seen.insert(id.clone()) {
                ids.push(id);
            }
        }
    }
    RegionSet::new(ids)
}

pub fn save_trips(path: &Path, log: &TripLog, regions: &RegionSet) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    w.write_record(HEADER).map_err(|e| Error::csv(path, e))?;
    for t in &log.trips {
        w.serialize(TripRow {
            request_time: t.request_time,
            origin: regions.id(t.origin).to_string(),
            destination: regions.id(t.destination).to_string(),
            duration_s: t.duration_s,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
