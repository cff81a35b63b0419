//! Step 1 of the solution procedure: find a feasible local solution of the
//! original multi-stage nonconvex program. The reported lower bound is the
//! profit of the returned decisions re-evaluated from scratch by
//! [`crate::economics::evaluate_state`]; the solver's internal objective is
//! never reported.

pub mod nlp;

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economics::{self, QueueEval};
use crate::market;
use crate::model::{CumulativePlan, MarketState, OperationalDecision, PlanningDecision, Scenario};
use crate::numerics::latin_hypercube;
use crate::queues::{self, swap::swap_table_for, SwapWaitTable};
use crate::{chargeflow, Error, Result, EPS_POS};

use nlp::{augmented_lagrangian, AlConfig, ConstrainedProblem};

const BIG_PENALTY: f64 = 1e7;
const RHO_CLAMP: f64 = 0.98;
/// Feasibility-margin floor as a fraction of the battery range; evaluations
/// below it are smoothly penalized instead of erroring.
const MARGIN_FLOOR_FRAC: f64 = 0.02;

/// Grid resolution and bounds for the upper-bound subproblem search.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub price: usize,
    pub idle_ev: usize,
    pub idle_gas: usize,
    pub plug_share: usize,
    pub charge_demand: usize,
    pub rebalance_time: usize,
    /// Multiplicative slab around the anchor solution values.
    pub slab_lo: f64,
    pub slab_hi: f64,
    /// Cells for the certified 1-D station-count bound search.
    pub inner_cells: usize,
    /// Fraction of subproblems re-solved at doubled resolution.
    pub refine_sample: f64,
    /// Relative UB shift that triggers a full-grid refinement.
    pub refine_trigger: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            price: 12,
            idle_ev: 8,
            idle_gas: 8,
            plug_share: 11,
            charge_demand: 10,
            rebalance_time: 6,
            slab_lo: 0.25,
            slab_hi: 4.0,
            inner_cells: 160,
            refine_sample: 0.1,
            refine_trigger: 1e-3,
        }
    }
}

/// Solver configuration; every field has a sensible default so config files
/// may specify any subset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub seed: u64,
    pub multistarts: usize,
    /// Worker threads; 0 uses the process default.
    pub workers: usize,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub kkt_tol: f64,
    pub constraint_tol: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    /// Lower bound standing in for strict positivity of idle EVs.
    pub min_idle_evs: f64,
    /// Per-stage discount factor on profits.
    pub discount: f64,
    /// 0 = derive from the scenario.
    pub price_max: f64,
    pub idle_max: f64,
    pub flow_max: f64,
    pub grid: GridConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            seed: 42,
            multistarts: 8,
            workers: 0,
            outer_iters: 10,
            inner_iters: 140,
            kkt_tol: 1e-6,
            constraint_tol: 1e-6,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            min_idle_evs: EPS_POS,
            discount: 1.0,
            price_max: 0.0,
            idle_max: 0.0,
            flow_max: 0.0,
            grid: GridConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn price_cap(&self, scenario: &Scenario) -> f64 {
        if self.price_max > 0.0 {
            self.price_max
        } else {
            4.0 * scenario.outside_price
        }
    }

    pub fn idle_cap(&self, scenario: &Scenario) -> f64 {
        if self.idle_max > 0.0 {
            self.idle_max
        } else {
            (scenario.base_demand.sum() / scenario.zones as f64).max(200.0)
        }
    }

    pub fn flow_cap(&self, scenario: &Scenario) -> f64 {
        if self.flow_max > 0.0 {
            self.flow_max
        } else {
            let worst_row = (0..scenario.zones)
                .map(|i| scenario.base_demand.row(i).sum())
                .fold(0.0f64, f64::max);
            (2.0 * worst_row).max(50.0)
        }
    }
}

/// Deployment mode: joint planning or the charging-only restriction
/// (swap stations pinned to zero, plug share pinned to one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Joint,
    ChargingOnly,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Joint => write!(f, "joint"),
            Mode::ChargingOnly => write!(f, "charging_only"),
        }
    }
}

/// Flat variable layout for the original problem:
/// [x_c | x_s | price | idle_ev | idle_gas | plug_share | rebalance].
#[derive(Debug, Clone, Copy)]
pub struct VarLayout {
    pub stages: usize,
    pub zones: usize,
    pub xc: usize,
    pub xs: usize,
    pub price: usize,
    pub ne: usize,
    pub ng: usize,
    pub r: usize,
    pub f: usize,
    pub len: usize,
}

impl VarLayout {
    pub fn new(stages: usize, zones: usize) -> Self {
        let tm = stages * zones;
        VarLayout {
            stages,
            zones,
            xc: 0,
            xs: tm,
            price: 2 * tm,
            ne: 3 * tm,
            ng: 4 * tm,
            r: 5 * tm,
            f: 6 * tm,
            len: 6 * tm + stages * zones * zones,
        }
    }

    #[inline]
    pub fn at(&self, block: usize, t: usize, i: usize) -> usize {
        block + t * self.zones + i
    }

    #[inline]
    pub fn at_f(&self, t: usize, i: usize, j: usize) -> usize {
        self.f + t * self.zones * self.zones + i * self.zones + j
    }

    pub fn encode(&self, plan: &PlanningDecision, ops: &[OperationalDecision]) -> Vec<f64> {
        let mut z = vec![0.0; self.len];
        for t in 0..self.stages {
            for i in 0..self.zones {
                z[self.at(self.xc, t, i)] = plan.charging[[t, i]];
                z[self.at(self.xs, t, i)] = plan.swapping[[t, i]];
                z[self.at(self.price, t, i)] = ops[t].price[i];
                z[self.at(self.ne, t, i)] = ops[t].idle_ev[i];
                z[self.at(self.ng, t, i)] = ops[t].idle_gas[i];
                z[self.at(self.r, t, i)] = ops[t].plug_share[i];
                for j in 0..self.zones {
                    z[self.at_f(t, i, j)] = ops[t].rebalance[[i, j]];
                }
            }
        }
        z
    }

    pub fn decode(&self, z: &[f64]) -> (PlanningDecision, Vec<OperationalDecision>) {
        let mut plan = PlanningDecision::zeros(self.stages, self.zones);
        let mut ops = Vec::with_capacity(self.stages);
        for t in 0..self.stages {
            let mut price = Array1::zeros(self.zones);
            let mut ne = Array1::zeros(self.zones);
            let mut ng = Array1::zeros(self.zones);
            let mut r = Array1::zeros(self.zones);
            let mut f = Array2::zeros((self.zones, self.zones));
            for i in 0..self.zones {
                plan.charging[[t, i]] = z[self.at(self.xc, t, i)];
                plan.swapping[[t, i]] = z[self.at(self.xs, t, i)];
                price[i] = z[self.at(self.price, t, i)];
                ne[i] = z[self.at(self.ne, t, i)];
                ng[i] = z[self.at(self.ng, t, i)];
                r[i] = z[self.at(self.r, t, i)];
                for j in 0..self.zones {
                    f[[i, j]] = z[self.at_f(t, i, j)];
                }
            }
            ops.push(OperationalDecision {
                price,
                idle_ev: ne,
                idle_gas: ng,
                rebalance: f,
                plug_share: r,
            });
        }
        (plan, ops)
    }
}

/// The original multi-stage program as a box-constrained NLP with flow
/// balance as equalities and budget/cap rows as inequalities. The charging
/// fixed point is eliminated: charging demand is always computed exactly
/// from the movement chain inside the objective.
pub struct OriginalProblem {
    pub scenario: Scenario,
    pub config: SolverConfig,
    pub mode: Mode,
    pub layout: VarLayout,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Stages forced to run without EVs (no budget has ever been positive).
    pub gas_stage: Vec<bool>,
    flow_scale: Vec<f64>,
    swap_table: Option<Arc<SwapWaitTable>>,
}

impl OriginalProblem {
    pub fn new(scenario: &Scenario, config: &SolverConfig, mode: Mode) -> Result<Self> {
        let layout = VarLayout::new(scenario.stages, scenario.zones);
        let cum_budget = scenario.cumulative_budgets();
        let gas_stage: Vec<bool> = cum_budget.iter().map(|&b| b <= 0.0).collect();
        if gas_stage.iter().any(|&g| g) && config.min_idle_evs > EPS_POS {
            return Err(Error::Infeasible(format!(
                "configuration requires at least {} idle EVs per zone but some stages have \
                 no budget for charging infrastructure",
                config.min_idle_evs
            )));
        }
        let swap_table = if mode == Mode::Joint && !gas_stage.iter().all(|&g| g) {
            Some(swap_table_for(
                &scenario.swap_spec,
                scenario.charge_spec.mean_charge_hours,
            )?)
        } else {
            None
        };
        let (m, t) = (scenario.zones, scenario.stages);
        let mut lo = vec![0.0; layout.len];
        let mut hi = vec![0.0; layout.len];
        let price_cap = config.price_cap(scenario);
        let idle_cap = config.idle_cap(scenario);
        let flow_cap = config.flow_cap(scenario);
        for st in 0..t {
            let gas = gas_stage[st];
            for i in 0..m {
                let set = |v: &mut Vec<f64>, idx: usize, val: f64| v[idx] = val;
                set(&mut hi, layout.at(layout.xc, st, i), if gas { 0.0 } else { scenario.cap });
                let xs_hi = if gas || mode == Mode::ChargingOnly { 0.0 } else { scenario.cap };
                set(&mut hi, layout.at(layout.xs, st, i), xs_hi);
                set(&mut hi, layout.at(layout.price, st, i), price_cap);
                let ne_idx = layout.at(layout.ne, st, i);
                if gas {
                    lo[ne_idx] = 0.0;
                    hi[ne_idx] = 0.0;
                } else {
                    lo[ne_idx] = config.min_idle_evs.max(EPS_POS);
                    hi[ne_idx] = idle_cap;
                }
                set(&mut hi, layout.at(layout.ng, st, i), idle_cap);
                let r_idx = layout.at(layout.r, st, i);
                if gas || mode == Mode::ChargingOnly {
                    lo[r_idx] = 1.0;
                    hi[r_idx] = 1.0;
                } else {
                    lo[r_idx] = 0.0;
                    hi[r_idx] = 1.0;
                }
                for j in 0..m {
                    set(&mut hi, layout.at_f(st, i, j), flow_cap);
                }
            }
        }
        let flow_scale = (0..m)
            .map(|i| {
                let total: f64 = (0..m)
                    .map(|j| scenario.base_demand[[i, j]] + scenario.base_demand[[j, i]])
                    .sum();
                1.0 / (1.0 + total)
            })
            .collect();
        Ok(OriginalProblem {
            scenario: scenario.clone(),
            config: config.clone(),
            mode,
            layout,
            lo,
            hi,
            gas_stage,
            flow_scale,
            swap_table,
        })
    }

    fn cumulative_at(&self, z: &[f64], block: usize, t: usize, i: usize) -> f64 {
        (0..=t).map(|tau| z[self.layout.at(block, tau, i)]).sum()
    }

    /// Penalized stage profit plus scaled flow residuals. Infeasible
    /// regions (unstable queues, exhausted feasibility margin, facilities
    /// missing for routed demand) are smoothed by linear penalties so the
    /// inner solver can climb back out; the audit accepts only
    /// penalty-free solutions.
    fn stage_eval(&self, t: usize, z: &[f64]) -> (f64, Vec<f64>) {
        let scn = &self.scenario;
        let m = scn.zones;
        let lay = &self.layout;
        let mut price = Array1::zeros(m);
        let mut ne = Array1::zeros(m);
        let mut ng = Array1::zeros(m);
        let mut r = Array1::zeros(m);
        let mut flows = Array2::zeros((m, m));
        for i in 0..m {
            price[i] = z[lay.at(lay.price, t, i)];
            ne[i] = z[lay.at(lay.ne, t, i)];
            ng[i] = z[lay.at(lay.ng, t, i)];
            r[i] = z[lay.at(lay.r, t, i)];
            for j in 0..m {
                flows[[i, j]] = z[lay.at_f(t, i, j)];
            }
        }
        let mut pickup = Array1::zeros(m);
        for i in 0..m {
            let total: f64 = ne[i] + ng[i];
            pickup[i] = scn.phi / total.max(1e-12).sqrt();
        }
        let mut demand = Array2::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                demand[[i, j]] = market::demand(
                    scn.base_demand[[i, j]],
                    price[i],
                    scn.trip_time[[i, j]],
                    pickup[i],
                    scn.alpha,
                    scn.logit_sensitivity,
                    scn.outside_price,
                );
            }
        }
        let residual = market::flow_residual(&demand, &flows);
        let scaled_res: Vec<f64> = residual
            .iter()
            .zip(&self.flow_scale)
            .map(|(r, s)| r * s)
            .collect();
        let ops = OperationalDecision {
            price,
            idle_ev: ne,
            idle_gas: ng,
            rebalance: flows,
            plug_share: r,
        };

        if self.gas_stage[t] {
            let mut fleet_gas = ops.idle_gas.sum();
            for i in 0..m {
                for j in 0..m {
                    fleet_gas += demand[[i, j]] * pickup[i]
                        + (demand[[i, j]] + ops.rebalance[[i, j]]) * scn.trip_time[[i, j]];
                }
            }
            let value =
                economics::profit(&ops.price, &demand, &scn.trip_time, 0.0, fleet_gas, scn);
            return (value, scaled_res);
        }

        let mut penalty = 0.0;
        let (ev_flow, ev_share) = match chargeflow::demand_matrix(
            &ops.idle_ev,
            &ops.idle_gas,
            &demand,
            &ops.rebalance,
            &pickup,
            &scn.trip_time,
        ) {
            Ok(v) => v,
            Err(_) => return (-1e12, scaled_res),
        };
        let charge_dist = match chargeflow::transition_matrix(&ev_flow)
            .and_then(|p| chargeflow::stationary_distribution(&p))
        {
            Ok(n) => n,
            Err(_) => return (-1e12, scaled_res),
        };

        let mut access_c = Array1::zeros(m);
        let mut access_s = Array1::zeros(m);
        for i in 0..m {
            if ops.plug_share[i] > 0.0 {
                let x = self.cumulative_at(z, lay.xc, t, i).max(1e-12);
                access_c[i] = scn.psi / x.sqrt();
            }
            if ops.plug_share[i] < 1.0 {
                let x = self.cumulative_at(z, lay.xs, t, i).max(1e-12);
                access_s[i] = scn.psi / x.sqrt();
            }
        }
        let margin = chargeflow::feasibility_margin(
            &charge_dist,
            &ops.plug_share,
            &access_c,
            &access_s,
            scn.battery_range_hours,
        );
        let floor = MARGIN_FLOOR_FRAC * scn.battery_range_hours;
        if margin < floor {
            penalty += BIG_PENALTY * (floor - margin);
        }
        let op_time =
            economics::ev_operating_time(&ops, &demand, &pickup, &ev_share, &scn.trip_time);
        let total_rate = op_time / margin.max(floor);
        let charge_demand = &charge_dist * total_rate;

        let v = scn.charge_spec.chargers as f64;
        let tau_c = scn.charge_spec.mean_charge_hours;
        let arrival_cap_c = RHO_CLAMP * v / tau_c;
        let mut wait_c = Array1::zeros(m);
        let mut wait_s = Array1::zeros(m);
        for i in 0..m {
            let plug_load = ops.plug_share[i] * charge_demand[i];
            if plug_load > 1e-12 {
                let x = self.cumulative_at(z, lay.xc, t, i).max(1e-12);
                let mut arrival = plug_load / x;
                if arrival > arrival_cap_c {
                    penalty += BIG_PENALTY * (arrival - arrival_cap_c) * tau_c / v;
                    arrival = arrival_cap_c;
                }
                wait_c[i] = queues::erlang_c_wait(arrival, &scn.charge_spec)
                    .map(|mq| mq.wait)
                    .unwrap_or(1e6);
            }
            let swap_load = (1.0 - ops.plug_share[i]) * charge_demand[i];
            if swap_load > 1e-12 {
                let table = self.swap_table.as_ref().expect("joint mode has a swap table");
                let x = self.cumulative_at(z, lay.xs, t, i).max(1e-12);
                let arrival = swap_load / x;
                let top = *table.nodes.last().unwrap();
                if arrival > top {
                    penalty += BIG_PENALTY * (arrival - top) * scn.swap_spec.swap_hours;
                }
                wait_s[i] = table.wait_smooth(arrival);
            }
        }
        let (fleet_ev, fleet_gas) = economics::fleet_sizes(
            &ops,
            &demand,
            &pickup,
            &ev_share,
            &charge_demand,
            &access_c,
            &wait_c,
            &access_s,
            &wait_s,
            scn,
        );
        let value =
            economics::profit(&ops.price, &demand, &scn.trip_time, fleet_ev, fleet_gas, scn);
        (value - penalty, scaled_res)
    }
}

impl ConstrainedProblem for OriginalProblem {
    fn dim(&self) -> usize {
        self.layout.len
    }

    fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    fn eval_all(&self, z: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let scn = &self.scenario;
        let mut total = 0.0;
        let mut eq = Vec::with_capacity(scn.stages * scn.zones);
        for t in 0..scn.stages {
            let (value, res) = self.stage_eval(t, z);
            total += self.config.discount.powi(t as i32) * value;
            eq.extend(res);
        }
        let [ac, a_s] = scn.unit_costs();
        let lay = &self.layout;
        let mut ineq = Vec::with_capacity(scn.stages + 2 * scn.zones);
        for t in 0..scn.stages {
            let mut spend = 0.0;
            for i in 0..scn.zones {
                spend += ac * z[lay.at(lay.xc, t, i)] + a_s * z[lay.at(lay.xs, t, i)];
            }
            ineq.push((scn.budgets[t] - spend) / (1.0 + scn.budgets[t]));
        }
        for i in 0..scn.zones {
            let cum_c = self.cumulative_at(z, lay.xc, scn.stages - 1, i);
            let cum_s = self.cumulative_at(z, lay.xs, scn.stages - 1, i);
            ineq.push((scn.cap - cum_c) / (1.0 + scn.cap));
            ineq.push((scn.cap - cum_s) / (1.0 + scn.cap));
        }
        (total, eq, ineq)
    }
}

/// A (plan, operations) pair used to seed the solver.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub plan: PlanningDecision,
    pub ops: Vec<OperationalDecision>,
}

/// Outcome of the lower-bound solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub plan: PlanningDecision,
    pub ops: Vec<OperationalDecision>,
    pub states: Vec<MarketState>,
    /// Discounted total profit of the returned solution, re-evaluated
    /// directly (this is the lower bound).
    pub lower_bound: f64,
    pub mode: Mode,
    /// Objective values reached by each multistart (diagnostics).
    pub start_values: Vec<f64>,
    pub audit: AuditReport,
}

/// Independent re-verification of every original-problem constraint.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub feasible: bool,
    pub issues: Vec<String>,
    /// max over stages of ||flow residual||_inf / total flow.
    pub flow_residual_rel: f64,
    pub max_budget_overshoot: f64,
    pub min_feasibility_margin: f64,
}

/// Re-checks budget, accumulation, caps, positivity, flow balance, queue
/// stability, and the feasibility margin from scratch, trusting nothing
/// from the solver. Queue evaluation is direct (no interpolation).
pub fn audit_solution(
    scenario: &Scenario,
    config: &SolverConfig,
    plan: &PlanningDecision,
    ops: &[OperationalDecision],
) -> AuditReport {
    let mut issues = Vec::new();
    let [ac, a_s] = scenario.unit_costs();
    let mut max_overshoot: f64 = 0.0;
    for t in 0..scenario.stages {
        for i in 0..scenario.zones {
            if plan.charging[[t, i]] < -1e-12 || plan.swapping[[t, i]] < -1e-12 {
                issues.push(format!("negative deployment at stage {t}, zone {i}"));
            }
        }
        let spend = ac * plan.charging.row(t).sum() + a_s * plan.swapping.row(t).sum();
        let overshoot = spend - scenario.budgets[t];
        max_overshoot = max_overshoot.max(overshoot);
        if overshoot > 1e-7 * (1.0 + scenario.budgets[t]) {
            issues.push(format!(
                "stage {t} spends {spend:.9} against budget {}",
                scenario.budgets[t]
            ));
        }
    }
    let cum = plan.cumulative();
    let cap_tol = 1e-7 * (1.0 + scenario.cap);
    if cum
        .charging
        .iter()
        .chain(cum.swapping.iter())
        .any(|&v| v > scenario.cap + cap_tol)
    {
        issues.push("per-zone facility cap exceeded".into());
    }
    let mut min_margin = f64::INFINITY;
    let mut worst_flow = 0.0f64;
    match economics::evaluate_horizon(&cum, ops, scenario, QueueEval::Direct, config.discount) {
        Ok((states, _)) => {
            for (t, state) in states.iter().enumerate() {
                if state.has_ev {
                    min_margin = min_margin.min(state.feasibility_margin);
                    if ops[t].idle_ev.iter().any(|&v| v < config.min_idle_evs.max(EPS_POS) - 1e-12)
                    {
                        issues.push(format!("stage {t} violates idle-EV positivity"));
                    }
                }
                let res = market::flow_residual(&state.demand, &ops[t].rebalance);
                let total_flow = state.demand.sum() + ops[t].rebalance.sum();
                let rel = res.iter().fold(0.0f64, |a, v| a.max(v.abs())) / total_flow.max(1e-12);
                worst_flow = worst_flow.max(rel);
                if rel > 1e-6 {
                    issues.push(format!(
                        "stage {t} flow-balance residual {rel:.3e} exceeds 1e-6 of total flow"
                    ));
                }
            }
        }
        Err(e) => issues.push(format!("market evaluation failed: {e}")),
    }
    AuditReport {
        feasible: issues.is_empty(),
        issues,
        flow_residual_rel: worst_flow,
        max_budget_overshoot: max_overshoot,
        min_feasibility_margin: if min_margin.is_finite() { min_margin } else { 0.0 },
    }
}

/// Clamps a solver iterate into exact feasibility where that is cheap:
/// boxes, per-stage budget rescaling, cumulative caps, and snapping of
/// plug shares within 1e-9 of {0, 1}.
fn repair(problem: &OriginalProblem, z: &mut [f64]) {
    nlp::project(z, &problem.lo, &problem.hi);
    let scn = &problem.scenario;
    let lay = &problem.layout;
    let [ac, a_s] = scn.unit_costs();
    for t in 0..scn.stages {
        for i in 0..scn.zones {
            for block in [lay.xc, lay.xs] {
                let idx = lay.at(block, t, i);
                if z[idx] < 1e-9 {
                    z[idx] = 0.0;
                }
            }
            let r_idx = lay.at(lay.r, t, i);
            if z[r_idx] > 1.0 - 1e-9 {
                z[r_idx] = 1.0;
            }
            if z[r_idx] < 1e-9 {
                z[r_idx] = 0.0;
            }
        }
        let mut spend = 0.0;
        for i in 0..scn.zones {
            spend += ac * z[lay.at(lay.xc, t, i)] + a_s * z[lay.at(lay.xs, t, i)];
        }
        if spend > scn.budgets[t] && spend > 0.0 {
            let scale = scn.budgets[t] / spend;
            for i in 0..scn.zones {
                z[lay.at(lay.xc, t, i)] *= scale;
                z[lay.at(lay.xs, t, i)] *= scale;
            }
        }
    }
    for i in 0..scn.zones {
        for block in [lay.xc, lay.xs] {
            let total: f64 = (0..scn.stages).map(|t| z[lay.at(block, t, i)]).sum();
            if total > scn.cap && total > 0.0 {
                let scale = scn.cap / total;
                for t in 0..scn.stages {
                    z[lay.at(block, t, i)] *= scale;
                }
            }
        }
    }
}

/// Multistart seeds: a deterministic charging-first start, then Latin
/// hypercube samples over price level, fleet sizes, plug share, and the
/// budget split between facility types. Zone allocations follow demand
/// weights. Every seed spends the full stage budget.
fn seed_starts(problem: &OriginalProblem, count: usize) -> Vec<Vec<f64>> {
    let scn = &problem.scenario;
    let lay = &problem.layout;
    let m = scn.zones;
    let weights: Vec<f64> = {
        let mut w: Vec<f64> = (0..m).map(|i| scn.base_demand.row(i).sum()).collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|v| *v /= total);
        } else {
            w.iter_mut().for_each(|v| *v = 1.0 / m as f64);
        }
        w
    };
    let mut rng = ChaCha8Rng::seed_from_u64(problem.config.seed);
    let samples = latin_hypercube(&mut rng, count.max(1), 5);
    let mut starts = Vec::with_capacity(count);
    for (s, u) in samples.iter().enumerate() {
        let charging_first = s == 0;
        let price_level = scn.outside_price * (1.0 + 1.2 * u[0]);
        let idle_e = 20.0 + 120.0 * u[1];
        let idle_g = 20.0 + 120.0 * u[2];
        let plug = if problem.mode == Mode::ChargingOnly || charging_first {
            1.0
        } else {
            0.5 + 0.5 * u[3]
        };
        let charge_budget_share = if problem.mode == Mode::ChargingOnly || charging_first {
            1.0
        } else {
            0.55 + 0.45 * u[4]
        };
        let mut z = vec![0.0; lay.len];
        for t in 0..scn.stages {
            let gas = problem.gas_stage[t];
            let budget = scn.budgets[t];
            for i in 0..m {
                z[lay.at(lay.xc, t, i)] =
                    charge_budget_share * budget * weights[i] / scn.cost_c;
                z[lay.at(lay.xs, t, i)] =
                    (1.0 - charge_budget_share) * budget * weights[i] / scn.cost_s;
                z[lay.at(lay.price, t, i)] = price_level;
                z[lay.at(lay.ne, t, i)] = if gas { 0.0 } else { idle_e * m as f64 * weights[i] };
                z[lay.at(lay.ng, t, i)] = idle_g * m as f64 * weights[i];
                z[lay.at(lay.r, t, i)] = plug;
            }
        }
        repair(problem, &mut z);
        starts.push(z);
    }
    starts
}

/// Solves the original problem from multiple starts and returns the best
/// audited-feasible solution. `extra_starts` seeds (for example a
/// charging-only solution when solving the joint problem, or the previous
/// budget level in a sweep) are appended to the generated ones.
pub fn solve_original(
    scenario: &Scenario,
    config: &SolverConfig,
    mode: Mode,
    extra_starts: &[WarmStart],
) -> Result<SolveOutcome> {
    let problem = OriginalProblem::new(scenario, config, mode)?;
    let mut starts = seed_starts(&problem, config.multistarts);
    for ws in extra_starts {
        let mut z = problem.layout.encode(&ws.plan, &ws.ops);
        repair(&problem, &mut z);
        starts.push(z);
    }
    let al_cfg = AlConfig {
        outer_iters: config.outer_iters,
        inner_iters: config.inner_iters,
        constraint_tol: config.constraint_tol,
        penalty_init: config.penalty_init,
        penalty_growth: config.penalty_growth,
        inner_tol: config.kkt_tol,
    };
    let results: Vec<(usize, nlp::AlResult)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(idx, z0)| (idx, augmented_lagrangian(&problem, z0, &al_cfg)))
        .collect();

    let mut candidates = Vec::new();
    let mut start_values = vec![f64::NEG_INFINITY; results.len()];
    for (idx, res) in &results {
        start_values[*idx] = res.objective;
        let mut z = res.z.clone();
        repair(&problem, &mut z);
        let (plan, ops) = problem.layout.decode(&z);
        let audit = audit_solution(scenario, config, &plan, &ops);
        if !audit.feasible {
            continue;
        }
        let cum = plan.cumulative();
        let (states, value) = match economics::evaluate_horizon(
            &cum,
            &ops,
            scenario,
            QueueEval::Direct,
            config.discount,
        ) {
            Ok(v) => v,
            Err(_) => continue,
        };
        candidates.push((*idx, plan, ops, states, value, audit));
    }
    if candidates.is_empty() {
        let detail = results
            .iter()
            .map(|(i, r)| format!("start {i}: violation {:.3e}", r.max_violation))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Infeasible(format!(
            "no multistart produced an audited-feasible solution ({detail})"
        )));
    }
    // Deterministic selection: best value, then lexicographically smallest
    // cumulative plan, then start index.
    candidates.sort_by(|a, b| {
        let scale = 1e-9 * (1.0 + a.4.abs().max(b.4.abs()));
        if (a.4 - b.4).abs() > scale {
            return b.4.partial_cmp(&a.4).unwrap();
        }
        let plan_a = plan_key(&a.1);
        let plan_b = plan_key(&b.1);
        plan_a
            .partial_cmp(&plan_b)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let (_, plan, ops, states, value, audit) = candidates.swap_remove(0);
    Ok(SolveOutcome {
        plan,
        ops,
        states,
        lower_bound: value,
        mode,
        start_values,
        audit,
    })
}

fn plan_key(plan: &PlanningDecision) -> Vec<f64> {
    let cum = plan.cumulative();
    cum.charging.iter().chain(cum.swapping.iter()).copied().collect()
}

/// Convenience wrapper building the cumulative plan of an outcome.
impl SolveOutcome {
    pub fn cumulative(&self) -> CumulativePlan {
        self.plan.cumulative()
    }
}


// Debug-only re-exports used by the scratch example; removed before release.
pub fn debug_seed_starts(problem: &OriginalProblem, count: usize) -> Vec<Vec<f64>> {
    seed_starts(problem, count)
}
pub fn debug_repair(problem: &OriginalProblem, z: &mut [f64]) {
    repair(problem, z)
}
