#![allow(dead_code)]

pub mod oracles;

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use safexp::dynamics::{Interval, TrackerBounds};
use safexp::reachability::{GridSpec, RolloutOptions, SolverOptions, TrackingModel, TrackingParams, ZGridSpec};

pub const G: f64 = 9.81;

pub fn bounds(tilt: f64, thrust: f64) -> TrackerBounds {
    TrackerBounds {
        pitch: Interval::new(FRAC_PI_2 - tilt, FRAC_PI_2 + tilt).unwrap(),
        roll: Interval::new(-tilt, tilt).unwrap(),
        thrust: Interval::new(G - thrust, G + thrust).unwrap(),
    }
}

pub fn params(grid: GridSpec) -> TrackingParams {
    TrackingParams {
        speed: 1.0,
        turn_rate: Interval::new(-1.0, 1.0).unwrap(),
        bounds: bounds(0.3, 3.0),
        gravity: G,
        grid,
        z_grid: ZGridSpec::default(),
        solver: SolverOptions::default(),
        level_check: RolloutOptions::default(),
    }
}

pub fn scenario_grid() -> GridSpec {
    GridSpec {
        d_max: 1.0,
        d_count: 20,
        psi_count: 24,
        v_max: 2.0,
        v_count: 21,
    }
}

pub fn small_grid(n: usize) -> GridSpec {
    GridSpec {
        d_max: 1.0,
        d_count: n,
        psi_count: n + n % 2,
        v_max: 2.0,
        v_count: n + 1 - n % 2,
    }
}

/// Model solved on the grid shipped with the scenarios, shared by the tests
/// of one binary.
pub fn scenario_model() -> &'static TrackingModel {
    static MODEL: OnceLock<TrackingModel> = OnceLock::new();
    MODEL.get_or_init(|| TrackingModel::build(params(scenario_grid()), None).expect("scenario model"))
}

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.cfg"))
}

pub fn scenario(name: &str) -> safexp::sim::ScenarioConfig {
    safexp::sim::ScenarioConfig::load(&scenario_path(name)).expect("shipped scenario")
}

/// Model for the shipped scenarios, loaded from (or written to) their cache.
pub fn shipped_model() -> &'static TrackingModel {
    static MODEL: OnceLock<TrackingModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = scenario("open");
        if let Some(dir) = cfg.hj.cache.as_ref().and_then(|p| p.parent()) {
            std::fs::create_dir_all(dir).expect("cache directory");
        }
        safexp::sim::build_model(&cfg).expect("shipped model")
    })
}
