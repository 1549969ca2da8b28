use amod::forecast::Forecaster;
use amod::io::synth::{generate_synthetic, SynthSpec};
use amod::model::TimeGrid;
use amod::mpc::MpcSettings;
use amod_opt::milp::MilpLimits;
use amod::offline::min_fleet_plan;
use amod::sim::{run, Controller, InitialDistribution, SimConfig};

fn small_day(seed: u64) -> (amod::model::Scenario, amod::io::trips::TripLog) {
    let spec = SynthSpec { regions: 4, trips: 300, ..SynthSpec::default() };
    generate_synthetic(&spec, &TimeGrid::day(), seed).unwrap()
}

fn controllers(truth: &amod::model::DemandSet) -> Vec<Controller> {
    // A fleet this small makes some epochs hard to prove optimal; the budget
    // keeps the run short and the incumbent plan is still used.
    let limits = MilpLimits { max_nodes: 2000, ..MilpLimits::default() };
    let settings = MpcSettings { horizon: 12, limits, ..MpcSettings::default() };
    vec![
        Controller::Mpc { forecaster: Forecaster::Oracle { truth: truth.clone(), t_forward: 12 }, settings: settings.clone() },
        Controller::Mpc { forecaster: Forecaster::Persistence { t_forward: 6 }, settings: settings.clone() },
        Controller::TvReactive { settings },
        Controller::Reactive,
        Controller::None,
    ]
}

#[test]
fn accounting_holds_every_tick_and_reruns_match() {
    let (s, log) = small_day(5);
    for controller in controllers(&s.demand) {
        let cfg = SimConfig { fleet_size: 9, initial: InitialDistribution::Uniform, controller, seed: 3, check_invariants: true };
        let a = run(&s, &log, &cfg).unwrap();
        let b = run(&s, &log, &cfg).unwrap();
        assert_eq!(a, b, "{}", a.controller);
        let ticks = 288 * 50;
        assert_eq!(a.series.waiting.len(), ticks);
        for k in 0..ticks {
            let sr = &a.series;
            assert_eq!(sr.idle[k] + sr.serving[k] + sr.rebalancing[k], 9);
            assert!(sr.delivered[k] + sr.waiting[k] <= sr.arrived[k]);
        }
        assert_eq!(a.waits_s.len() + a.unserved_waits_s.len(), log.len());
    }
}

#[test]
fn oracle_never_waits_longer_than_blind_mpc() {
    for seed in [1, 2, 3] {
        let (s, log) = small_day(seed);
        let fleet = min_fleet_plan(&s).unwrap().fleet_size as u32;
        let settings = MpcSettings { horizon: 12, ..MpcSettings::default() };
        let mean = |controller| {
            let cfg = SimConfig { fleet_size: fleet, initial: InitialDistribution::Uniform, controller, seed, check_invariants: false };
            run(&s, &log, &cfg).unwrap().mean_wait()
        };
        let oracle = mean(Controller::Mpc { forecaster: Forecaster::Oracle { truth: s.demand.clone(), t_forward: 12 }, settings: settings.clone() });
        let blind = mean(Controller::TvReactive { settings });
        assert!(oracle <= blind, "seed {seed}: oracle {oracle} blind {blind}");
    }
}

#[test]
fn blind_mpc_without_waiting_customers_stays_put() {
    let (s, _) = small_day(9);
    let cfg = SimConfig {
        fleet_size: 12,
        initial: InitialDistribution::Explicit(vec![12, 0, 0, 0]),
        controller: Controller::TvReactive { settings: MpcSettings { horizon: 8, ..MpcSettings::default() } },
        seed: 0,
        check_invariants: true,
    };
    let m = run(&s, &amod::io::trips::TripLog::default(), &cfg).unwrap();
    assert_eq!(m.tasks_issued, 0);
    assert_eq!(m.solves.len(), 288);
}

#[test]
fn offline_seeding_spreads_the_fleet_like_the_plan() {
    let (s, log) = small_day(4);
    let plan = min_fleet_plan(&s).unwrap();
    let fleet = plan.fleet_size as u32;
    let cfg = SimConfig {
        fleet_size: fleet,
        initial: InitialDistribution::FromSeed(plan.seed.clone()),
        controller: Controller::None,
        seed: 0,
        check_invariants: true,
    };
    let m = run(&s, &log, &cfg).unwrap();
    assert_eq!(m.series.idle[0] + m.series.serving[0], fleet);
}
