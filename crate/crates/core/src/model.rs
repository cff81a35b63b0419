//! Domain types, the scenario JSON schema, and validation shared by every
//! other module. A [`Scenario`] is the immutable problem instance; all other
//! types are decisions or derived market quantities.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, EPS_POS};

/// Per-station plug-in charging specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeStationSpec {
    /// Chargers per station (V).
    pub chargers: usize,
    /// Mean charge duration in hours (exponential service).
    pub mean_charge_hours: f64,
}

/// Per-station battery-swapping specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapStationSpec {
    /// Automated swap bays (S).
    pub bays: usize,
    /// Internal battery chargers (C).
    pub chargers: usize,
    /// Batteries in circulation (B).
    pub batteries: usize,
    /// EV queue capacity including vehicles in service (W).
    pub queue_capacity: usize,
    /// Constant swap duration in hours.
    pub swap_hours: f64,
}

impl SwapStationSpec {
    /// Number of chain states (W+1)(B+1).
    pub fn state_count(&self) -> usize {
        (self.queue_capacity + 1) * (self.batteries + 1)
    }
}

/// The immutable problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Zone count M (>= 2).
    pub zones: usize,
    /// Stage count T (>= 1).
    pub stages: usize,
    /// Potential travel demand per origin/destination pair, trips/hour.
    pub base_demand: Array2<f64>,
    /// Mean trip duration per pair, hours; strictly positive incl. diagonal.
    pub trip_time: Array2<f64>,
    /// Pickup-time constant, hours * vehicles^(1/2).
    pub phi: f64,
    /// Facility-access constant, hours * stations^(1/2).
    pub psi: f64,
    /// Passenger value of time, $/hour.
    pub alpha: f64,
    /// Logit sensitivity, 1/$.
    pub logit_sensitivity: f64,
    /// Outside-option price, $/hour (outside cost = outside_price * trip_time).
    pub outside_price: f64,
    /// Per-hour operating cost of an EV, $.
    pub gamma_e: f64,
    /// Per-hour operating cost of a gasoline vehicle, $.
    pub gamma_g: f64,
    /// Hours an EV sustains between top-ups ((1-eps)*Omega/omega).
    pub battery_range_hours: f64,
    /// Deployment cost of one charging station (swap-station numeraire).
    pub cost_c: f64,
    /// Deployment cost of one swapping station (numeraire, usually 1).
    pub cost_s: f64,
    /// Per-stage budgets, numeraire units.
    pub budgets: Vec<f64>,
    /// Max stations per zone per facility type.
    pub cap: f64,
    pub charge_spec: ChargeStationSpec,
    pub swap_spec: SwapStationSpec,
}

/// On-disk shape of a scenario document: matrices as row-major arrays of
/// arrays, all other fields scalar. See README for the schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawScenario {
    #[serde(default)]
    pub name: Option<String>,
    pub zones: usize,
    pub stages: usize,
    pub base_demand: Vec<Vec<f64>>,
    pub trip_time: Vec<Vec<f64>>,
    pub phi: f64,
    pub psi: f64,
    pub alpha: f64,
    pub logit_sensitivity: f64,
    pub outside_price: f64,
    pub gamma_e: f64,
    pub gamma_g: f64,
    pub battery_range_hours: f64,
    pub cost_c: f64,
    pub cost_s: f64,
    pub budgets: Vec<f64>,
    pub cap: f64,
    pub charge_spec: ChargeStationSpec,
    pub swap_spec: SwapStationSpec,
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], m: usize) -> Result<Array2<f64>> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Validation(format!(
            "{name} must be a {m}x{m} matrix (zones = {m})"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((m, m), flat).expect("shape checked above"))
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Validation(format!("{name} must be > 0, got {v}")));
    }
    Ok(())
}

/// Validates a parsed scenario document, returning the typed scenario and a
/// list of non-fatal warnings. Rejects on the first violated constraint.
pub fn validate_scenario(raw: &RawScenario) -> Result<(Scenario, Vec<String>)> {
    let mut warnings = Vec::new();
    if raw.zones < 2 {
        return Err(Error::Validation(format!(
            "zones must be >= 2, got {}",
            raw.zones
        )));
    }
    if raw.stages < 1 {
        return Err(Error::Validation("stages must be >= 1".into()));
    }
    let m = raw.zones;
    let base_demand = matrix_from_rows("base_demand", &raw.base_demand, m)?;
    let trip_time = matrix_from_rows("trip_time", &raw.trip_time, m)?;
    for ((i, j), &v) in base_demand.indexed_iter() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Validation(format!(
                "base_demand[{i}][{j}] must be >= 0, got {v}"
            )));
        }
    }
    for ((i, j), &v) in trip_time.indexed_iter() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Validation(format!(
                "trip_time[{i}][{j}] must be strictly positive, got {v}"
            )));
        }
    }
    for (name, v) in [
        ("phi", raw.phi),
        ("psi", raw.psi),
        ("alpha", raw.alpha),
        ("logit_sensitivity", raw.logit_sensitivity),
        ("outside_price", raw.outside_price),
        ("gamma_e", raw.gamma_e),
        ("gamma_g", raw.gamma_g),
        ("battery_range_hours", raw.battery_range_hours),
        ("cost_c", raw.cost_c),
        ("cost_s", raw.cost_s),
    ] {
        require_positive(name, v)?;
    }
    if raw.budgets.len() != raw.stages {
        return Err(Error::Validation(format!(
            "budgets must list one entry per stage ({} expected, {} given)",
            raw.stages,
            raw.budgets.len()
        )));
    }
    for (t, &b) in raw.budgets.iter().enumerate() {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::Validation(format!(
                "budgets[{t}] must be >= 0, got {b}"
            )));
        }
    }
    if !(raw.cap >= 0.0) || !raw.cap.is_finite() {
        return Err(Error::Validation(format!("cap must be >= 0, got {}", raw.cap)));
    }
    if raw.charge_spec.chargers < 1 {
        return Err(Error::Validation("charge_spec.chargers must be >= 1".into()));
    }
    require_positive("charge_spec.mean_charge_hours", raw.charge_spec.mean_charge_hours)?;
    let s = &raw.swap_spec;
    if s.bays < 1 {
        return Err(Error::Validation("swap_spec.bays must be >= 1".into()));
    }
    if s.chargers < 1 {
        return Err(Error::Validation("swap_spec.chargers must be >= 1".into()));
    }
    if s.batteries < 1 {
        return Err(Error::Validation("swap_spec.batteries must be >= 1".into()));
    }
    if s.bays > s.queue_capacity {
        return Err(Error::Validation(format!(
            "swap_spec.queue_capacity ({}) must be >= bays ({})",
            s.queue_capacity, s.bays
        )));
    }
    require_positive("swap_spec.swap_hours", s.swap_hours)?;
    if raw.gamma_e >= raw.gamma_g {
        warnings.push(format!(
            "gamma_e ({}) >= gamma_g ({}): EVs have no operating-cost advantage",
            raw.gamma_e, raw.gamma_g
        ));
    }
    if s.batteries > s.chargers {
        warnings.push(format!(
            "swap_spec.batteries ({}) > chargers ({}): at most {} batteries charge simultaneously",
            s.batteries, s.chargers, s.chargers
        ));
    }
    let off_diag_zero = base_demand
        .indexed_iter()
        .filter(|((i, j), &v)| i != j && v == 0.0)
        .count();
    if off_diag_zero > 0 {
        warnings.push(format!(
            "{off_diag_zero} off-diagonal base_demand entries are zero; the EV transition \
             matrix may lose strict positivity"
        ));
    }
    Ok((
        Scenario {
            name: raw.name.clone().unwrap_or_else(|| "scenario".into()),
            zones: raw.zones,
            stages: raw.stages,
            base_demand,
            trip_time,
            phi: raw.phi,
            psi: raw.psi,
            alpha: raw.alpha,
            logit_sensitivity: raw.logit_sensitivity,
            outside_price: raw.outside_price,
            gamma_e: raw.gamma_e,
            gamma_g: raw.gamma_g,
            battery_range_hours: raw.battery_range_hours,
            cost_c: raw.cost_c,
            cost_s: raw.cost_s,
            budgets: raw.budgets.clone(),
            cap: raw.cap,
            charge_spec: raw.charge_spec,
            swap_spec: raw.swap_spec,
        },
        warnings,
    ))
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<(Self, Vec<String>)> {
        let raw: RawScenario = serde_json::from_str(text)?;
        validate_scenario(&raw)
    }

    pub fn from_path(path: &std::path::Path) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Re-serializable document form (used by the idempotence check and the
    /// trip-ingestion fragment writer).
    pub fn to_raw(&self) -> RawScenario {
        RawScenario {
            name: Some(self.name.clone()),
            zones: self.zones,
            stages: self.stages,
            base_demand: matrix_rows(&self.base_demand),
            trip_time: matrix_rows(&self.trip_time),
            phi: self.phi,
            psi: self.psi,
            alpha: self.alpha,
            logit_sensitivity: self.logit_sensitivity,
            outside_price: self.outside_price,
            gamma_e: self.gamma_e,
            gamma_g: self.gamma_g,
            battery_range_hours: self.battery_range_hours,
            cost_c: self.cost_c,
            cost_s: self.cost_s,
            budgets: self.budgets.clone(),
            cap: self.cap,
            charge_spec: self.charge_spec,
            swap_spec: self.swap_spec,
        }
    }

    /// Cumulative budgets b~_t = sum_{tau<=t} b_tau.
    pub fn cumulative_budgets(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.budgets
            .iter()
            .map(|b| {
                acc += b;
                acc
            })
            .collect()
    }

    /// Deployment-cost row vector A_i = [cost_c, cost_s].
    pub fn unit_costs(&self) -> [f64; 2] {
        [self.cost_c, self.cost_s]
    }
}

pub fn matrix_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Per-stage newly built stations (incremental plan).
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningDecision {
    /// stages x zones, new charging stations.
    pub charging: Array2<f64>,
    /// stages x zones, new swapping stations.
    pub swapping: Array2<f64>,
}

impl PlanningDecision {
    pub fn zeros(stages: usize, zones: usize) -> Self {
        PlanningDecision {
            charging: Array2::zeros((stages, zones)),
            swapping: Array2::zeros((stages, zones)),
        }
    }

    pub fn cumulative(&self) -> CumulativePlan {
        CumulativePlan {
            charging: running_sum(&self.charging),
            swapping: running_sum(&self.swapping),
        }
    }
}

fn running_sum(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for t in 1..out.nrows() {
        let prev = out.row(t - 1).to_owned();
        let mut row = out.row_mut(t);
        row += &prev;
    }
    out
}

/// Accumulated stations available at each stage (x~).
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativePlan {
    pub charging: Array2<f64>,
    pub swapping: Array2<f64>,
}

impl CumulativePlan {
    /// Recovers the incremental plan; entries are clamped at zero to shed
    /// negative rounding dust.
    pub fn increments(&self) -> PlanningDecision {
        PlanningDecision {
            charging: diff_rows(&self.charging),
            swapping: diff_rows(&self.swapping),
        }
    }
}

fn diff_rows(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for t in (1..out.nrows()).rev() {
        let prev = out.row(t - 1).to_owned();
        let mut row = out.row_mut(t);
        row -= &prev;
    }
    out.mapv_inplace(|v| v.max(0.0));
    out
}

/// Operational decisions for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationalDecision {
    /// Per-zone ride fare, $/hour.
    pub price: Array1<f64>,
    /// Idle EVs per zone (strictly positive, floored at EPS_POS).
    pub idle_ev: Array1<f64>,
    /// Idle gasoline vehicles per zone.
    pub idle_gas: Array1<f64>,
    /// Rebalancing flow matrix, vehicles/hour.
    pub rebalance: Array2<f64>,
    /// Fraction of charging demand routed to plug-in stations, in [0,1].
    pub plug_share: Array1<f64>,
}

impl OperationalDecision {
    pub fn validate(&self, zones: usize) -> Result<()> {
        if self.price.len() != zones
            || self.idle_ev.len() != zones
            || self.idle_gas.len() != zones
            || self.plug_share.len() != zones
            || self.rebalance.nrows() != zones
            || self.rebalance.ncols() != zones
        {
            return Err(Error::Validation("operational decision dimension mismatch".into()));
        }
        for (name, arr, lo) in [
            ("price", &self.price, 0.0),
            ("idle_ev", &self.idle_ev, EPS_POS),
            ("idle_gas", &self.idle_gas, 0.0),
        ] {
            if arr.iter().any(|&v| v < lo || !v.is_finite()) {
                return Err(Error::Validation(format!("{name} out of range")));
            }
        }
        if self.rebalance.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Validation("rebalance must be >= 0".into()));
        }
        if self.plug_share.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Validation("plug_share must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// Operational decision augmented with the charging demand `k` and the
/// rebalancing-time aggregate `f~` used by the relaxed reformulation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDecision {
    pub ops: OperationalDecision,
    /// Charging demand per zone, vehicles/hour (decision in the relaxation).
    pub charge_demand: Array1<f64>,
    /// f~_i = sum_j f_ij * tau_ij, vehicle-hours/hour.
    pub rebalance_time: Array1<f64>,
}

/// All endogenous market quantities derived from one (plan, operations) pair.
#[derive(Debug, Clone)]
pub struct MarketState {
    /// Realized passenger demand, trips/hour.
    pub demand: Array2<f64>,
    /// Passenger pickup time per zone, hours.
    pub pickup_time: Array1<f64>,
    /// Probability an EV serves a dispatch in each zone.
    pub ev_share: Array1<f64>,
    /// EV movement counts between zones.
    pub ev_flow: Array2<f64>,
    /// EV movement transition matrix (row stochastic).
    pub transition: Array2<f64>,
    /// Stationary charging-demand distribution.
    pub charge_dist: Array1<f64>,
    /// Charging demand per zone, vehicles/hour.
    pub charge_demand: Array1<f64>,
    /// Total charging rate K = sum(charge_demand).
    pub total_charge_rate: f64,
    /// Feasibility margin phi_E (positive at any feasible state).
    pub feasibility_margin: f64,
    /// Access time to charging stations per zone, hours (0 where unused).
    pub access_c: Array1<f64>,
    /// Access time to swapping stations per zone, hours (0 where unused).
    pub access_s: Array1<f64>,
    /// Queue wait at charging stations, hours.
    pub wait_c: Array1<f64>,
    /// Queue wait at swapping stations, hours.
    pub wait_s: Array1<f64>,
    /// Blocking probability at swapping stations.
    pub block_s: Array1<f64>,
    /// EV fleet size.
    pub fleet_ev: f64,
    /// Gasoline fleet size.
    pub fleet_gas: f64,
    /// Platform profit, $/hour.
    pub profit: f64,
    /// Fraction of EV fleet time spent in revenue operations.
    pub ev_utilization: f64,
    /// False when the stage runs without EVs (no infrastructure at all).
    pub has_ev: bool,
}

impl MarketState {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "demand": matrix_rows(&self.demand),
            "pickup_time": self.pickup_time.to_vec(),
            "ev_share": self.ev_share.to_vec(),
            "ev_flow": matrix_rows(&self.ev_flow),
            "transition": matrix_rows(&self.transition),
            "charge_dist": self.charge_dist.to_vec(),
            "charge_demand": self.charge_demand.to_vec(),
            "total_charge_rate": self.total_charge_rate,
            "feasibility_margin": self.feasibility_margin,
            "access_c": self.access_c.to_vec(),
            "access_s": self.access_s.to_vec(),
            "wait_c": self.wait_c.to_vec(),
            "wait_s": self.wait_s.to_vec(),
            "block_s": self.block_s.to_vec(),
            "fleet_ev": self.fleet_ev,
            "fleet_gas": self.fleet_gas,
            "profit": self.profit,
            "ev_utilization": self.ev_utilization,
            "has_ev": self.has_ev,
        })
    }
}

/// Post-hoc integer rounding of a fractional plan. Reported for convenience
/// only; bounds are always computed on the fractional plan.
#[derive(Debug, Clone, Serialize)]
pub struct RoundingReport {
    pub rounded_charging: Vec<Vec<f64>>,
    pub rounded_swapping: Vec<Vec<f64>>,
    /// Per-stage budget overshoot of the rounded plan (negative = slack).
    pub budget_overshoot: Vec<f64>,
    pub cap_violated: bool,
}

pub fn rounding_report(plan: &PlanningDecision, scenario: &Scenario) -> RoundingReport {
    let rc = plan.charging.mapv(|v| v.round().max(0.0));
    let rs = plan.swapping.mapv(|v| v.round().max(0.0));
    let [ac, a_s] = scenario.unit_costs();
    let overshoot: Vec<f64> = (0..scenario.stages)
        .map(|t| ac * rc.row(t).sum() + a_s * rs.row(t).sum() - scenario.budgets[t])
        .collect();
    let cum_c = running_sum(&rc);
    let cum_s = running_sum(&rs);
    let cap_violated = cum_c.iter().chain(cum_s.iter()).any(|&v| v > scenario.cap);
    RoundingReport {
        rounded_charging: matrix_rows(&rc),
        rounded_swapping: matrix_rows(&rs),
        budget_overshoot: overshoot,
        cap_violated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn smoke_raw() -> RawScenario {
        RawScenario {
            name: Some("smoke2".into()),
            zones: 2,
            stages: 1,
            base_demand: vec![vec![40.0, 60.0], vec![60.0, 40.0]],
            trip_time: vec![vec![0.1, 0.2], vec![0.2, 0.1]],
            phi: 0.8,
            psi: 0.1,
            alpha: 25.0,
            logit_sensitivity: 0.1,
            outside_price: 35.0,
            gamma_e: 20.0,
            gamma_g: 30.0,
            battery_range_hours: 6.0,
            cost_c: 0.2,
            cost_s: 1.0,
            budgets: vec![5.0],
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

    #[test]
    fn minimal_symmetric_scenario_validates() {
        let (s, warnings) = validate_scenario(&smoke_raw()).unwrap();
        assert_eq!(s.zones, 2);
        assert!(warnings.is_empty());
    }

    #[test]
    fn zero_trip_time_rejected_by_name() {
        let mut raw = smoke_raw();
        raw.trip_time[0][0] = 0.0;
        let err = validate_scenario(&raw).unwrap_err();
        assert!(err.to_string().contains("trip_time"), "got: {err}");
        assert!(err.to_string().contains("strictly positive"));
    }

    #[test]
    fn negative_demand_rejected() {
        let mut raw = smoke_raw();
        raw.base_demand[0][1] = -1.0;
        let err = validate_scenario(&raw).unwrap_err();
        assert!(err.to_string().contains("base_demand"));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut raw = smoke_raw();
        raw.base_demand = vec![vec![1.0, 2.0, 3.0]; 3];
        let err = validate_scenario(&raw).unwrap_err();
        assert!(err.to_string().contains("2x2"));
    }

    #[test]
    fn missing_field_fails_at_parse() {
        let err = Scenario::from_json_str("{\"zones\": 2}").unwrap_err();
        assert!(matches!(err, Error::Json(_)));
    }

    #[test]
    fn validation_is_idempotent() {
        let (s1, _) = validate_scenario(&smoke_raw()).unwrap();
        let (s2, _) = validate_scenario(&s1.to_raw()).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn inverted_cost_ordering_warns_without_rejecting() {
        let mut raw = smoke_raw();
        raw.gamma_e = 31.0;
        let (_, warnings) = validate_scenario(&raw).unwrap();
        assert!(warnings.iter().any(|w| w.contains("gamma_e")));
    }

    #[test]
    fn cumulative_roundtrip() {
        let mut plan = PlanningDecision::zeros(3, 2);
        plan.charging[[0, 0]] = 1.0;
        plan.charging[[1, 0]] = 2.0;
        plan.swapping[[2, 1]] = 4.0;
        let cum = plan.cumulative();
        assert_eq!(cum.charging[[2, 0]], 3.0);
        let back = cum.increments();
        assert_eq!(back, plan);
    }

    #[test]
    fn rounding_report_flags_budget_overshoot() {
        let (s, _) = validate_scenario(&smoke_raw()).unwrap();
        let mut plan = PlanningDecision::zeros(1, 2);
        plan.charging[[0, 0]] = 12.6; // rounds to 13 -> cost 2.6
        plan.swapping[[0, 1]] = 2.4; // rounds to 2 -> cost 2
        let rep = rounding_report(&plan, &s);
        assert!((rep.budget_overshoot[0] - (0.2 * 13.0 + 2.0 - 5.0)).abs() < 1e-12);
        assert!(!rep.cap_violated);
    }
}
