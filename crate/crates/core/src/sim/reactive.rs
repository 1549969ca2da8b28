//! Time-invariant reactive rebalancing: equalize vehicle excess across
//! regions with a min-travel-time transportation problem.

use amod_opt::flow::INFINITE;
use amod_opt::{solve_min_cost_flow, FlowNetwork, Status};

use crate::error::{Error, Result};
use crate::model::TravelTimeMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactiveState {
    pub idle: Vec<u32>,
    /// All vehicles en route to each region, however far out.
    pub inbound: Vec<u32>,
    pub queued: Vec<u32>,
}

/// Target excess per region: an equal split of the total, the remainder going
/// to the regions that already have the most (lowest index on ties).
pub fn targets(excess: &[i64]) -> Vec<i64> {
    let n = excess.len() as i64;
    let total: i64 = excess.iter().sum();
    let mut out = vec![total.div_euclid(n); excess.len()];
    let mut order: Vec<usize> = (0..excess.len()).collect();
    order.sort_by(|&a, &b| excess[b].cmp(&excess[a]).then(a.cmp(&b)));
    for &i in order.iter().take(total.rem_euclid(n) as usize) {
        out[i] += 1;
    }
    out
}

/// Moves `(origin, destination, count)` that bring idle surplus to deficit
/// regions at minimum total travel time.
pub fn reactive_moves(state: &ReactiveState, travel: &TravelTimeMatrix) -> Result<Vec<(usize, usize, u32)>> {
    let n = state.idle.len();
    if state.inbound.len() != n || state.queued.len() != n || travel.len() != n {
        return Err(Error::input("reactive state dimensions disagree"));
    }
    let excess: Vec<i64> = (0..n)
        .map(|i| state.idle[i] as i64 + state.inbound[i] as i64 - state.queued[i] as i64)
        .collect();
    let target = targets(&excess);
    let supply: Vec<i64> = (0..n).map(|i| (excess[i] - target[i]).max(0).min(state.idle[i] as i64)).collect();
    let deficit: Vec<i64> = (0..n).map(|i| (target[i] - excess[i]).max(0)).collect();
    let flow = supply.iter().sum::<i64>().min(deficit.iter().sum());
    if flow == 0 {
        return Ok(Vec::new());
    }

    let (source, sink) = (2 * n, 2 * n + 1);
    let mut net = FlowNetwork::new(2 * n + 2);
    net.supply[source] = flow;
    net.supply[sink] = -flow;
    for i in 0..n {
        if supply[i] > 0 {
            net.add_arc(source, i, 0, supply[i], 0.0);
        }
        if deficit[i] > 0 {
            net.add_arc(n + i, sink, 0, deficit[i], 0.0);
        }
    }
    let mut lanes = Vec::new();
    for i in (0..n).filter(|&i| supply[i] > 0) {
        for j in (0..n).filter(|&j| deficit[j] > 0 && j != i) {
            net.add_arc(i, n + j, 0, INFINITE, travel.seconds(i, j));
            lanes.push((i, j));
        }
    }
    let result = solve_min_cost_flow(&net)?;
    if result.status != Status::Optimal {
        return Err(Error::input(format!("reactive transportation problem ended {}", result.status)));
    }
    let first_lane = net.arcs.len() - lanes.len();
    Ok(lanes
        .iter()
        .zip(&result.flows[first_lane..])
        .filter(|(_, &f)| f > 0)
        .map(|(&(i, j), &f)| (i, j, f as u32))
        .collect())
}
