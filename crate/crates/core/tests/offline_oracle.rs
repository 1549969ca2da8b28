mod common;

use amod::offline::{fleet_size, min_fleet_plan, solve_offline};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_tiny_scenarios_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ff1);
    for case in 0..25 {
        let s = common::random_offline(&mut rng);
        let oracle = common::offline_oracle(&s);
        let plan = solve_offline(&s).unwrap();
        assert!((plan.objective - oracle.min_cost).abs() < 1e-6, "case {case}: {} vs {:?}", plan.objective, oracle);
        assert_eq!(plan.fleet_size, oracle.fleet_at_min_cost, "case {case}");
        assert!(plan.conservation_residuals(&s).iter().all(|&r| r == 0));

        assert_eq!(fleet_size(&s).unwrap(), oracle.min_fleet, "case {case}");
        let small = min_fleet_plan(&s).unwrap();
        assert!((small.objective - oracle.cost_at_min_fleet).abs() < 1e-6, "case {case}");
    }
}

#[test]
fn every_customer_rides_in_the_plan() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..40 {
        let s = common::random_offline(&mut rng);
        let plan = solve_offline(&s).unwrap();
        for (i, j, t, c) in s.demand.iter() {
            assert_eq!(plan.x_p.get(&(i, j, t)).copied().unwrap_or(0), c as u64);
        }
    }
}
