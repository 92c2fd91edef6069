//! Shared fixtures: the 15-bus feeder and synthetic clustered scenarios.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use phca::builder::BuilderConfig;
use phca::feeder::{load_feeder, FeederModel};
use phca::pipeline::{prepare, Prepared};
use phca::scenario::{load_scenarios, AnalysisGrid, ScenarioTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LOAD_SHAPE: [f64; 24] = [
    0.45, 0.40, 0.38, 0.37, 0.38, 0.45, 0.60, 0.70, 0.65, 0.60, 0.58, 0.57, 0.58, 0.60, 0.65, 0.75, 0.90,
    1.00, 0.98, 0.92, 0.85, 0.75, 0.62, 0.50,
];

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn feeder15() -> FeederModel {
    load_feeder(&std::fs::read_to_string(data_dir().join("feeder15.toml")).unwrap()).unwrap()
}

/// Solar shape for an hour of day: a bell between 6h and 18h.
pub fn solar_shape(hour: usize) -> f64 {
    if (6..=18).contains(&hour) {
        (std::f64::consts::PI * (hour as f64 - 6.0) / 12.0).sin()
    } else {
        0.0
    }
}

/// Hourly load and solar tables (long layout) over `days` repeated days
/// with multiplicative noise. Solar peaks at `solar_peak` times the DER
/// rating so that every scaling up to `1 / solar_peak` keeps headroom.
pub fn write_scenarios(dir: &Path, feeder: &FeederModel, days: usize, noise: f64, solar_peak: f64, seed: u64) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut load = String::from("hour,bus,value\n");
    let mut solar = String::from("hour,bus,value\n");
    for h in 0..days * 24 {
        let hod = h % 24;
        for b in 1..feeder.n_buses() {
            let bus = &feeder.buses()[b];
            let w = 1.0 + noise * rng.random_range(-1.0..=1.0);
            writeln!(load, "{h},{},{}", bus.id, LOAD_SHAPE[hod] * w).unwrap();
            if bus.has_der() {
                let w = 1.0 + noise * rng.random_range(-1.0..=0.0);
                writeln!(solar, "{h},{},{}", bus.id, solar_peak * bus.p_rated * solar_shape(hod) * w).unwrap();
            }
        }
    }
    let (lp, sp) = (dir.join("load.csv"), dir.join("solar.csv"));
    std::fs::write(&lp, load).unwrap();
    std::fs::write(&sp, solar).unwrap();
    (lp, sp)
}

pub fn table(dir: &Path, feeder: &FeederModel, days: usize, seed: u64) -> ScenarioTable {
    let (lp, sp) = write_scenarios(dir, feeder, days, 0.02, 0.6, seed);
    load_scenarios(&lp, &sp, feeder, seed).unwrap()
}

pub fn acceptance_grid() -> AnalysisGrid {
    AnalysisGrid {
        scalings: vec![1.0, 1.6],
        oversizes: vec![1.0, 1.1],
        penetrations: vec![0.5, 1.0],
    }
}

/// The 30-day, 8-point batch on the 15-bus feeder.
pub fn acceptance_batch() -> (FeederModel, Prepared) {
    let feeder = feeder15();
    let dir = tempfile::tempdir().unwrap();
    let t = table(dir.path(), &feeder, 30, 7);
    let prepared = prepare(&feeder, &BuilderConfig::default(), &t, &acceptance_grid()).unwrap();
    (feeder, prepared)
}
