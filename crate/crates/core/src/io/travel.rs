//! Travel-time matrix estimation from a trip log.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::trips::TripLog;
use crate::model::{travel_steps, RegionSet, TimeGrid, TravelTimeMatrix};

const HEADER: [&str; 3] = ["origin", "destination", "seconds"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TravelReport {
    /// Pairs with at least one observed trip.
    pub observed: usize,
    /// Pairs filled by chaining observed pairs.
    pub composed: usize,
    /// Pairs filled with the global mean.
    pub global_mean: usize,
}

/// Mean observed duration per pair, rounded up to whole intervals. Pairs
/// without trips take the shortest chain of observed pairs (by intervals,
/// then seconds); pairs still unreachable take the global mean duration.
pub fn build_travel_matrix(log: &TripLog, num_regions: usize, grid: &TimeGrid) -> Result<(TravelTimeMatrix, TravelReport)> {
    let n = num_regions;
    let nonidle: Vec<_> = log.trips.iter().filter(|t| t.origin != t.destination).collect();
    if nonidle.is_empty() {
        return Err(Error::input("travel matrix needs at least one trip between distinct regions"));
    }
    let mut sum = vec![0.0; n * n];
    let mut count = vec![0u64; n * n];
    for t in &nonidle {
        if t.origin >= n || t.destination >= n {
            return Err(Error::input(format!("trip references region outside 0..{n}")));
        }
        sum[t.origin * n + t.destination] += t.duration_s;
        count[t.origin * n + t.destination] += 1;
    }
    let global = nonidle.iter().map(|t| t.duration_s).sum::<f64>() / nonidle.len() as f64;

    let mut report = TravelReport::default();
    // (steps, seconds) per pair; None while unknown.
    let mut best: Vec<Option<(usize, f64)>> = vec![None; n * n];
    for k in 0..n * n {
        if count[k] > 0 {
            let mean = sum[k] / count[k] as f64;
            best[k] = Some((travel_steps(mean, grid), mean));
            report.observed += 1;
        }
    }
    let direct = best.clone();
    for k in 0..n {
        for i in 0..n {
            let Some((s1, d1)) = best[i * n + k] else { continue };
            for j in 0..n {
                if i == j {
                    continue;
                }
                let Some((s2, d2)) = best[k * n + j] else { continue };
                let cand = (s1 + s2, d1 + d2);
                let better = match best[i * n + j] {
                    None => true,
                    Some(cur) => direct[i * n + j].is_none() && (cand.0, cand.1) < (cur.0, cur.1),
                };
                if better {
                    best[i * n + j] = Some(cand);
                }
            }
        }
    }
    let mut steps = vec![1; n * n];
    let mut seconds = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            if i == j {
                continue;
            }
            match best[k] {
                Some((s, d)) => {
                    if direct[k].is_none() {
                        report.composed += 1;
                    }
                    steps[k] = s;
                    seconds[k] = d;
                }
                None => {
                    report.global_mean += 1;
                    steps[k] = travel_steps(global, grid);
                    seconds[k] = global;
                }
            }
        }
    }
    if report.global_mean > 0 {
        log::warn!("{} region pairs had no route and use the global mean of {global:.0} s", report.global_mean);
    }
    Ok((TravelTimeMatrix::from_parts(n, seconds, steps)?, report))
}

/// Writes the off-diagonal travel seconds as `origin,destination,seconds`.
pub fn save_travel(path: &Path, travel: &TravelTimeMatrix, regions: &RegionSet) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    w.write_record(HEADER).map_err(|e| Error::csv(path, e))?;
    let n = travel.len();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            w.write_record([regions.id(i), regions.id(j), &travel.seconds(i, j).to_string()])
                .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a travel file written by [`save_travel`]; every ordered pair of
/// distinct regions must be listed.
pub fn load_travel(path: &Path, regions: &RegionSet, grid: &TimeGrid) -> Result<TravelTimeMatrix> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| Error::csv(path, e))?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::input(format!("{}: travel header must be {}", path.display(), HEADER.join(","))));
    }
    let n = regions.len();
    let mut seconds = vec![f64::NAN; n * n];
    for (k, row) in r.deserialize::<(String, String, f64)>().enumerate() {
        let line = k + 2;
        let (a, b, s) = row.map_err(|e| Error::input(format!("{}:{line}: {e}", path.display())))?;
        let (Some(i), Some(j)) = (regions.position(&a), regions.position(&b)) else {
            return Err(Error::input(format!("{}:{line}: unknown region", path.display())));
        };
        seconds[i * n + j] = s;
    }
    for i in 0..n {
        seconds[i * n + i] = 0.0;
    }
    if let Some(k) = seconds.iter().position(|s| s.is_nan()) {
        return Err(Error::input(format!(
            "{}: no travel time for {} -> {}",
            path.display(),
            regions.id(k / n),
            regions.id(k % n)
        )));
    }
    TravelTimeMatrix::from_seconds(n, seconds, grid)
}
