//! Shared fixtures for unit tests.

use crate::model::{validate_scenario, ChargeStationSpec, RawScenario, Scenario, SwapStationSpec};
use crate::optimizer::SolverConfig;

pub fn smoke2_raw() -> RawScenario {
    RawScenario {
        name: Some("smoke2".into()),
        zones: 2,
        stages: 1,
        base_demand: vec![vec![400.0, 600.0], vec![600.0, 400.0]],
        trip_time: vec![vec![0.1, 0.2], vec![0.2, 0.1]],
        phi: 0.4,
        psi: 0.1,
        alpha: 20.0,
        logit_sensitivity: 0.15,
        outside_price: 55.0,
        gamma_e: 20.0,
        gamma_g: 30.0,
        battery_range_hours: 6.0,
        cost_c: 0.2,
        cost_s: 1.0,
        budgets: vec![4.0],
        cap: 50.0,
        charge_spec: ChargeStationSpec { chargers: 10, mean_charge_hours: 1.0 },
        swap_spec: SwapStationSpec {
            bays: 1,
            chargers: 10,
            batteries: 10,
            queue_capacity: 100,
            swap_hours: 1.0 / 12.0,
        },
    }
}

pub fn smoke2() -> Scenario {
    validate_scenario(&smoke2_raw()).unwrap().0
}

pub fn smoke2_with_budgets(budgets: Vec<f64>) -> Scenario {
    let mut raw = smoke2_raw();
    raw.stages = budgets.len();
    raw.budgets = budgets;
    validate_scenario(&raw).unwrap().0
}

/// Solver settings small enough for unit tests.
pub fn fast_config() -> SolverConfig {
    SolverConfig {
        seed: 7,
        multistarts: 3,
        outer_iters: 7,
        inner_iters: 80,
        ..SolverConfig::default()
    }
}
