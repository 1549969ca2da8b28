use std::path::Path;
use std::process::{Command, Output};

fn amod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amod")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn out_dir(dir: &Path, name: &str) -> String {
    format!("out_dir={}", dir.join(name).display())
}

const SMALL: [&str; 4] = ["synth.regions=3", "synth.trips=120", "steps=24", "synth.period_s=7200"];

#[test]
fn generated_trip_log_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["gen-synth".to_string(), out_dir(dir.path(), "gen")];
    args.extend(SMALL.iter().map(|s| s.to_string()));
    let o = amod(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("120 trips over 3 regions"));

    let trips = dir.path().join("gen/trips.csv");
    let travel = dir.path().join("gen/travel.csv");
    let header = std::fs::read_to_string(&trips).unwrap();
    assert!(header.starts_with("request_time,origin,destination,duration_s\n"));

    let source = [
        "source=trips".to_string(),
        format!("trips={}", trips.display()),
        format!("travel={}", travel.display()),
        "start_time=0".to_string(),
        "steps=24".to_string(),
    ];
    let mut validate = vec!["validate".to_string(), "controllers=reactive".to_string()];
    validate.extend(source.iter().cloned());
    let o = amod(&validate.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("ok: 3 regions, 24 steps, 120 trips (0 dropped)"));

    let mut fleet = vec!["fleet-size".to_string(), out_dir(dir.path(), "fleet")];
    fleet.extend(source.iter().cloned());
    let o = amod(&fleet.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let n: u64 = stdout(&o).trim().parse().unwrap();
    assert!(n > 0);
    let plan = std::fs::read_to_string(dir.path().join("fleet/fleet_plan.csv")).unwrap();
    let seeded: u64 = plan
        .lines()
        .skip(1)
        .filter(|l| l.contains(",seed,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(seeded, n);
}

#[test]
fn manifest_reproduces_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate".to_string(), out_dir(dir.path(), "a"), "controllers=mpc-oracle,reactive,none".into()];
    args.extend(SMALL.iter().map(|s| s.to_string()));
    args.push("planning_horizon=12".into());
    args.push("t_forward=6".into());
    let o = amod(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("a/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.starts_with("controller,mean_wait_s,median_wait_s,p95_wait_s,total_reb_tasks,total_reb_vehicle_steps\n"));

    let manifest = dir.path().join("a/manifest.txt");
    let o = amod(&["simulate", "--config", manifest.to_str().unwrap(), &out_dir(dir.path(), "b")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let again = std::fs::read_to_string(dir.path().join("b/summary.csv")).unwrap();
    assert_eq!(summary, again);
}

#[test]
fn input_errors_exit_with_one() {
    let o = amod(&["simulate", "no_such_key=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    let o = amod(&["validate", "source=trips", "trips=/nonexistent/trips.csv"]);
    assert_eq!(o.status.code(), Some(1));

    let o = amod(&["simulate", "t_forward=60"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exhausted_solver_budget_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = amod(&[
        "simulate",
        &out_dir(dir.path(), "b"),
        "synth.regions=4",
        "synth.trips=300",
        "fleet=9",
        "controllers=mpc-oracle",
        "planning_horizon=12",
        "t_forward=12",
        "mpc.max_nodes=1",
        "mpc.allow_fallback=false",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
