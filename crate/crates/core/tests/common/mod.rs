//! Exhaustive reference solvers for tiny instances and random generators for
//! them. The solvers walk vehicle states step by step and share no code with
//! the network or integer-program formulations.

#![allow(dead_code)]

use std::collections::HashMap;

use amod::forecast::{Forecast, Provenance};
use amod::model::{CostModel, CostParams, DemandSet, RegionSet, Scenario, TimeGrid, TravelTimeMatrix};
use amod::mpc::StateObservation;
use rand::Rng;

/// All ways to split `total` identical vehicles over `parts` destinations.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Cartesian product of per-item option lists.
fn product<T: Clone>(lists: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for list in lists {
        let mut next = Vec::with_capacity(out.len() * list.len());
        for prefix in &out {
            for x in list {
                let mut p = prefix.clone();
                p.push(x.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn max_tau(s: &Scenario, horizon: usize, t0: usize) -> usize {
    let n = s.num_regions();
    let mut m = 1;
    for t in 1..=horizon {
        for i in 0..n {
            for j in 0..n {
                m = m.max(s.travel.tau(i, j, t0 + t));
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineOracle {
    pub min_cost: f64,
    /// Fewest vehicles among minimum-cost seedings.
    pub fleet_at_min_cost: u64,
    pub min_fleet: u64,
    /// Cheapest cost among minimum-fleet seedings.
    pub cost_at_min_fleet: f64,
}

/// Brute force over every seeding with at most as many vehicles as
/// customers (more vehicles only add idling), each solved by a memoized walk
/// over the vehicles' positions and trips in progress.
pub fn offline_oracle(s: &Scenario) -> OfflineOracle {
    let n = s.num_regions();
    let horizon = s.grid.horizon;
    let customers = s.demand.total() as usize;
    let lanes = max_tau(s, horizon, 0);
    let mut results: Vec<(u64, f64)> = Vec::new();
    // Completion costs depend only on the state, so seedings share the memo.
    let mut memo = HashMap::new();
    for total in 0..=customers {
        for seed in compositions(total, n) {
            let avail: Vec<usize> = seed.clone();
            if let Some(c) = offline_walk(s, 1, avail, vec![0; lanes * n], &mut memo) {
                results.push((total as u64, c));
            }
        }
    }
    assert!(!results.is_empty(), "some seeding always serves every customer");
    let min_cost = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let tol = 1e-7 * (1.0 + min_cost.abs());
    let fleet_at_min_cost = results.iter().filter(|r| r.1 <= min_cost + tol).map(|r| r.0).min().unwrap();
    let min_fleet = results.iter().map(|r| r.0).min().unwrap();
    let cost_at_min_fleet = results
        .iter()
        .filter(|r| r.0 == min_fleet)
        .map(|r| r.1)
        .fold(f64::INFINITY, f64::min);
    OfflineOracle {
        min_cost,
        fleet_at_min_cost,
        min_fleet,
        cost_at_min_fleet,
    }
}

type OfflineKey = (usize, Vec<usize>, Vec<usize>);

/// Cheapest completion from step `t` with `avail` vehicles per region and
/// `pipe[(d-1)·n + j]` vehicles reaching `j` at step `t + d`.
fn offline_walk(
    s: &Scenario,
    t: usize,
    avail: Vec<usize>,
    pipe: Vec<usize>,
    memo: &mut HashMap<OfflineKey, Option<f64>>,
) -> Option<f64> {
    let n = s.num_regions();
    let horizon = s.grid.horizon;
    if t > horizon {
        return Some(0.0);
    }
    let key = (t, avail.clone(), pipe.clone());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let lanes = pipe.len() / n;
    let mut base = pipe.clone();
    let mut spare = vec![0usize; n];
    let mut feasible = true;
    for i in 0..n {
        let mut riders = 0;
        for j in 0..n {
            let c = s.demand.get(i, j, t) as usize;
            if c > 0 {
                riders += c;
                let d = s.travel.tau(i, j, t);
                base[(d - 1) * n + j] += c;
            }
        }
        if riders > avail[i] {
            feasible = false;
            break;
        }
        spare[i] = avail[i] - riders;
    }
    let result = if !feasible {
        None
    } else {
        let per_region: Vec<Vec<Vec<usize>>> = (0..n).map(|i| compositions(spare[i], n)).collect();
        let mut best: Option<f64> = None;
        for choice in product(&per_region) {
            let mut p = base.clone();
            let mut cost = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let c = choice[i][j];
                    if c > 0 {
                        cost += s.costs.reb(i, j, t) * c as f64;
                        p[(s.travel.tau(i, j, t) - 1) * n + j] += c;
                    }
                }
            }
            let next_avail: Vec<usize> = p[..n].to_vec();
            let mut next_pipe = p[n..].to_vec();
            next_pipe.extend(std::iter::repeat_n(0, n));
            debug_assert_eq!(next_pipe.len(), lanes * n);
            if let Some(rest) = offline_walk(s, t + 1, next_avail, next_pipe, memo) {
                let total = cost + rest;
                if best.is_none_or(|b| total < b) {
                    best = Some(total);
                }
            }
        }
        best
    };
    memo.insert(key, result);
    result
}

/// Minimum of the controller problem's objective over all integral plans.
pub fn mpc_oracle(s: &Scenario, obs: &StateObservation, fc: &Forecast, horizon: usize) -> f64 {
    let n = s.num_regions();
    let lanes = max_tau(s, horizon, obs.t0);
    let pairs: Vec<(usize, usize)> = obs.outstanding.iter().filter(|(_, &c)| c > 0).map(|(&k, _)| k).collect();
    let remaining: Vec<usize> = pairs.iter().map(|p| obs.outstanding[p] as usize).collect();
    let mut memo = HashMap::new();
    let walk = MpcWalk { s, obs, fc, horizon, pairs };
    walk.go(1, vec![0; lanes * n], remaining, &mut memo)
        .expect("the controller problem is always feasible")
}

struct MpcWalk<'a> {
    s: &'a Scenario,
    obs: &'a StateObservation,
    fc: &'a Forecast,
    horizon: usize,
    pairs: Vec<(usize, usize)>,
}

type MpcKey = (usize, Vec<usize>, Vec<usize>);

impl MpcWalk<'_> {
    /// `pipe[(d-1)·n + j]`: vehicles reaching `j` at relative step `k + d - 1`
    /// from earlier decisions; lane 0 arrives now.
    fn go(&self, k: usize, pipe: Vec<usize>, remaining: Vec<usize>, memo: &mut HashMap<MpcKey, Option<f64>>) -> Option<f64> {
        let n = self.s.num_regions();
        if k > self.horizon {
            return remaining.iter().all(|&r| r == 0).then_some(0.0);
        }
        let key = (k, pipe.clone(), remaining.clone());
        if let Some(&v) = memo.get(&key) {
            return v;
        }
        let t = self.obs.t0 + k;
        let avail: Vec<usize> = (0..n).map(|i| pipe[i] + self.obs.supply(i, k) as usize).collect();
        // Lane `d - 1` of `carry` arrives at `k + d`.
        let mut carry = pipe[n..].to_vec();
        carry.extend(std::iter::repeat_n(0, n));

        // Per pair: pickups of waiting customers now, then how many of the
        // forecast plus those pickups are served (the rest are dropped).
        let mut options: Vec<Vec<(usize, usize, usize, usize)>> = Vec::new(); // (i, j, w, served)
        for i in 0..n {
            for j in 0..n {
                let lam = self.fc.get(i, j, k) as usize;
                let pos = self.pairs.iter().position(|&p| p == (i, j));
                let max_w = pos.map_or(0, |p| remaining[p]);
                let mut opts = Vec::new();
                for w in 0..=max_w {
                    for served in 0..=(lam + w) {
                        opts.push((i, j, w, served));
                    }
                }
                options.push(opts);
            }
        }
        let mut best: Option<f64> = None;
        for choice in product(&options) {
            let mut used = vec![0usize; n];
            let mut cost = 0.0;
            let mut rem = remaining.clone();
            let mut p = carry.clone();
            for &(i, j, w, served) in &choice {
                let lam = self.fc.get(i, j, k) as usize;
                used[i] += served;
                cost += self.s.costs.drop(i, j, t) * (lam + w - served) as f64;
                if w > 0 {
                    let pos = self.pairs.iter().position(|&q| q == (i, j)).unwrap();
                    rem[pos] -= w;
                    cost += self.s.costs.wait(i, j, k) * w as f64;
                }
                if served > 0 {
                    p[(self.s.travel.tau(i, j, t) - 1) * n + j] += served;
                }
            }
            if (0..n).any(|i| used[i] > avail[i]) {
                continue;
            }
            let per_region: Vec<Vec<Vec<usize>>> = (0..n).map(|i| compositions(avail[i] - used[i], n)).collect();
            for moves in product(&per_region) {
                let mut q = p.clone();
                let mut c = cost;
                for i in 0..n {
                    for j in 0..n {
                        let m = moves[i][j];
                        if m > 0 {
                            c += self.s.costs.reb(i, j, t) * m as f64;
                            q[(self.s.travel.tau(i, j, t) - 1) * n + j] += m;
                        }
                    }
                }
                if let Some(rest) = self.go(k + 1, q, rem.clone(), memo) {
                    let total = c + rest;
                    if best.is_none_or(|b| total < b) {
                        best = Some(total);
                    }
                }
            }
        }
        memo.insert(key, best);
        best
    }
}

/// Random travel steps in `1..=max`, intra-region trips taking one step.
pub fn random_steps<R: Rng>(rng: &mut R, n: usize, max: usize) -> Vec<usize> {
    (0..n * n)
        .map(|k| if k / n == k % n { 1 } else { rng.random_range(1..=max) })
        .collect()
}

/// Tiny offline instance: up to 4 regions, 8 steps and 6 customers, with
/// small integer costs so that ties between plans are common.
pub fn random_offline<R: Rng>(rng: &mut R) -> Scenario {
    let n = rng.random_range(1..=4);
    let horizon = rng.random_range(1..=8);
    let grid = TimeGrid::new(300, horizon, 6).unwrap();
    let steps = random_steps(rng, n, 3);
    let travel = TravelTimeMatrix::from_steps(n, steps, 300);
    let costs = if rng.random_bool(0.5) {
        CostModel::from_travel(&travel, CostParams::default(), horizon)
    } else {
        let reb = (0..n * n).map(|_| rng.random_range(0..=4) as f64).collect();
        CostModel::from_parts(n, reb, vec![100.0; n * n], vec![1.0; n * n]).unwrap()
    };
    let mut demand = DemandSet::new();
    for _ in 0..rng.random_range(0..=6) {
        demand.add(rng.random_range(0..n), rng.random_range(0..n), rng.random_range(1..=horizon), 1);
    }
    Scenario {
        regions: RegionSet::numbered(n),
        grid,
        travel,
        demand,
        costs,
    }
}

/// Tiny controller instance: up to 3 regions, horizon 5 and 4 customers
/// split between waiting and forecast ones.
pub fn random_mpc<R: Rng>(rng: &mut R) -> (Scenario, StateObservation, Forecast, usize) {
    let n = rng.random_range(1..=3);
    let horizon = rng.random_range(1..=5);
    let grid = TimeGrid::new(300, 288, 6).unwrap();
    let travel = TravelTimeMatrix::from_steps(n, random_steps(rng, n, 3), 300);
    let costs = match rng.random_range(0..3) {
        0 => CostModel::from_travel(&travel, CostParams::default(), horizon),
        _ => {
            let reb = (0..n * n).map(|_| rng.random_range(0..=6) as f64).collect();
            let drop = (0..n * n).map(|_| rng.random_range(1..=20) as f64).collect();
            let wait = (0..n * n).map(|_| rng.random_range(0..=4) as f64).collect();
            CostModel::from_parts(n, reb, drop, wait).unwrap()
        }
    };
    let t0 = rng.random_range(0..4);
    let mut obs = StateObservation::new(n, horizon, t0);
    for i in 0..n {
        obs.idle[i] = rng.random_range(0..=1);
        if rng.random_bool(0.3) {
            obs.inbound[i][rng.random_range(0..horizon)] += 1;
        }
    }
    let t_forward = rng.random_range(1..=horizon);
    let mut fc = Forecast::empty(t0, t_forward, Provenance::Oracle);
    let customers = rng.random_range(0..=4);
    for _ in 0..customers {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if rng.random_bool(0.4) {
            *obs.outstanding.entry((i, j)).or_insert(0) += 1;
        } else {
            let k = rng.random_range(1..=t_forward);
            let c = fc.get(i, j, k);
            fc.set(i, j, k, c + 1);
        }
    }
    let scenario = Scenario {
        regions: RegionSet::numbered(n),
        grid,
        travel,
        demand: DemandSet::new(),
        costs,
    };
    (scenario, obs, fc, horizon)
}

#[test]
fn compositions_count() {
    assert_eq!(compositions(3, 2).len(), 4);
    assert_eq!(compositions(0, 3), vec![vec![0, 0, 0]]);
    assert_eq!(compositions(2, 3).len(), 6);
}
