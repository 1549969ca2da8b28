//! `amod`: fleet sizing, offline plans and controller experiments from the
//! command line.
//!
//! Every subcommand reads an optional `--config` file of `key = value` lines
//! and then applies `key=value` arguments on top of it.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amod::error::Error;
use amod::io::config::KvConfig;
use amod::io::experiment::{prepare, run_experiment, ExperimentConfig, Mode, ScenarioSource};
use amod::io::report::write_plan;
use amod::io::synth::generate_synthetic;
use amod::io::travel::save_travel;
use amod::io::trips::save_trips;
use amod::model::{validate, TimeGrid};
use amod::offline::{min_fleet_plan, solve_offline};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "amod", version, about = "Rebalancing planner and simulator for mobility-on-demand fleets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the smallest fleet that serves every trip and export its plan.
    FleetSize(Common),
    /// Solve the offline rebalancing problem and export the plan.
    SolveOffline(Common),
    /// Simulate the configured controllers.
    Simulate(Common),
    /// Simulate forecast-driven controllers over `sweep.t_forward`.
    Sweep(Common),
    /// Record controller solve times.
    Bench(Common),
    /// Write a synthetic trip log and travel-time file.
    GenSynth(Common),
    /// Check a simulation config and the scenario it describes.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Settings that override the config file, as `key=value`.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut kv = match &self.config {
            Some(path) => KvConfig::load(path)?,
            None => KvConfig::new(),
        };
        for arg in &self.overrides {
            let (k, v) = KvConfig::parse_override(arg)?;
            kv.set(k, v);
        }
        ExperimentConfig::from_kv(&kv)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Budget(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(command: &Command) -> Result<(), Error> {
    match command {
        Command::FleetSize(c) => fleet_size(&c.load()?),
        Command::SolveOffline(c) => offline(&c.load()?),
        Command::Simulate(c) => experiment(c.load()?, Mode::Simulate),
        Command::Sweep(c) => experiment(c.load()?, Mode::Sweep),
        Command::Bench(c) => experiment(c.load()?, Mode::Bench),
        Command::GenSynth(c) => gen_synth(&c.load()?),
        Command::Validate(c) => check(&c.load()?),
    }
}

fn create_out_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::input(format!("{}: {e}", dir.display())))
}

fn fleet_size(cfg: &ExperimentConfig) -> Result<(), Error> {
    cfg.validate_scenario()?;
    let p = prepare(cfg)?;
    let plan = min_fleet_plan(&p.scenario)?;
    create_out_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("fleet_plan.csv");
    write_plan(&path, &plan.rows(), &p.scenario.regions)?;
    log::info!("plan written to {}", path.display());
    println!("{}", plan.fleet_size);
    Ok(())
}

fn offline(cfg: &ExperimentConfig) -> Result<(), Error> {
    cfg.validate_scenario()?;
    let p = prepare(cfg)?;
    let plan = solve_offline(&p.scenario)?;
    create_out_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("offline_plan.csv");
    write_plan(&path, &plan.rows(), &p.scenario.regions)?;
    println!("objective {}", plan.objective);
    println!("fleet_size {}", plan.fleet_size);
    println!("plan {}", path.display());
    Ok(())
}

fn experiment(mut cfg: ExperimentConfig, mode: Mode) -> Result<(), Error> {
    cfg.mode = mode;
    let report = run_experiment(&cfg)?;
    match report.min_fleet {
        Some(m) => println!("fleet {} (offline minimum {m})", report.fleet_size),
        None => println!("fleet {}", report.fleet_size),
    }
    println!("{:<28} {:>12} {:>12} {:>12} {:>9}", "controller", "mean_wait_s", "median_s", "p95_s", "unserved");
    for m in &report.runs {
        let w = m.wait_summary();
        println!("{:<28} {:>12.3} {:>12.3} {:>12.3} {:>9}", m.controller, w.mean, w.median, w.p95, w.unserved);
    }
    println!("reports in {}", cfg.out_dir.display());
    Ok(())
}

fn gen_synth(cfg: &ExperimentConfig) -> Result<(), Error> {
    let ScenarioSource::Synthetic(spec) = &cfg.source else {
        return Err(Error::input("gen-synth needs a synthetic source"));
    };
    let grid = TimeGrid::new(cfg.delta_t, cfg.window_start + cfg.steps, cfg.tick)?;
    let (s, log) = generate_synthetic(spec, &grid, cfg.seed)?;
    create_out_dir(&cfg.out_dir)?;
    let trips = cfg.out_dir.join("trips.csv");
    let travel = cfg.out_dir.join("travel.csv");
    save_trips(&trips, &log, &s.regions)?;
    save_travel(&travel, &s.travel, &s.regions)?;
    println!("{} trips over {} regions", log.len(), s.num_regions());
    println!("trips {}", trips.display());
    println!("travel {}", travel.display());
    Ok(())
}

fn check(cfg: &ExperimentConfig) -> Result<(), Error> {
    cfg.validate()?;
    let p = prepare(cfg)?;
    let problems = validate(&p.scenario);
    if !problems.is_empty() {
        let lines: Vec<String> = problems.iter().map(|v| v.0.clone()).collect();
        return Err(Error::input(format!("invalid scenario:\n  {}", lines.join("\n  "))));
    }
    println!(
        "ok: {} regions, {} steps, {} trips ({} dropped)",
        p.scenario.num_regions(),
        p.scenario.grid.horizon,
        p.log.len(),
        p.dropped
    );
    Ok(())
}
