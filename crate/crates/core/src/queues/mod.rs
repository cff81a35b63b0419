//! Waiting-time models for both facility types: the Erlang-C plug-in
//! charging queue, the mixed open/closed battery-swapping queue (in
//! [`swap`]), facility access times, and the convexity probe used to audit
//! the wait-vs-station-count relationship.

pub mod swap;

pub use swap::{swap_chain_build, swap_wait, SwapChain, SwapWaitTable};

use crate::model::{ChargeStationSpec, SwapStationSpec};
use crate::{Error, Result};

/// Summary of one queue evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueMetrics {
    /// Facility utilization rho (charging queue) or bay load (swap queue).
    pub utilization: f64,
    /// Probability of an empty charging queue; 1 for an idle facility.
    pub empty_prob: f64,
    /// Expected queue wait in hours, excluding service.
    pub wait: f64,
    /// Blocking probability (swap queue only, 0 for charging).
    pub block: f64,
}

/// Travel time to the nearest facility of a type with `stations` deployed
/// in the zone: psi / sqrt(stations).
pub fn access_time(stations: f64, psi: f64) -> Result<f64> {
    if stations <= 0.0 {
        return Err(Error::Domain(format!(
            "access time undefined with {stations} stations in zone"
        )));
    }
    Ok(psi / stations.sqrt())
}

/// Expected M/M/V queue wait by the Erlang C formula, with the empty-queue
/// probability summed from v = 0 (the convention under which V = 1
/// reproduces the M/M/1 result).
pub fn erlang_c_wait(arrival: f64, spec: &ChargeStationSpec) -> Result<QueueMetrics> {
    let v = spec.chargers;
    let tau = spec.mean_charge_hours;
    if arrival < 0.0 {
        return Err(Error::Domain("arrival rate must be >= 0".into()));
    }
    if arrival == 0.0 {
        return Ok(QueueMetrics { utilization: 0.0, empty_prob: 1.0, wait: 0.0, block: 0.0 });
    }
    let offered = arrival * tau;
    let rho = offered / v as f64;
    if rho >= 1.0 {
        return Err(Error::UnstableQueue { rho });
    }
    // P0 = [ sum_{v'=0}^{V-1} a^v'/v'! + a^V/(V! (1-rho)) ]^-1, terms built
    // by the running product a/v' to stay in range.
    let mut term = 1.0;
    let mut partial = 0.0;
    for stage in 0..v {
        partial += term;
        term *= offered / (stage + 1) as f64;
    }
    // term now holds a^V / V!.
    let empty_prob = 1.0 / (partial + term / (1.0 - rho));
    let wait = rho * empty_prob * term / ((1.0 - rho) * (1.0 - rho) * arrival);
    Ok(QueueMetrics { utilization: rho, empty_prob, wait, block: 0.0 })
}

/// Which facility type a probe targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueKind {
    Charging,
    Swapping,
}

/// One row of a convexity probe table.
#[derive(Debug, Clone)]
pub struct ConvexityRow {
    pub stations: f64,
    /// None when the queue is unstable at this station count.
    pub wait: Option<f64>,
    /// Second difference centred here (needs both neighbours stable).
    pub second_difference: Option<f64>,
    /// True when the second difference dips below -tolerance.
    pub flagged: bool,
}

pub const CONVEXITY_TOL: f64 = 1e-6;

/// Evaluates the per-station wait while splitting a fixed zone-level
/// charging demand over `stations` facilities, and reports second
/// differences of the wait curve. Unstable points are reported, not
/// errored.
pub fn convexity_probe(
    kind: QueueKind,
    demand_rate: f64,
    stations: &[f64],
    charge_spec: &ChargeStationSpec,
    swap_spec: &SwapStationSpec,
) -> Result<Vec<ConvexityRow>> {
    if demand_rate <= 0.0 {
        return Err(Error::Domain("probe demand rate must be > 0".into()));
    }
    let waits: Vec<Option<f64>> = stations
        .iter()
        .map(|&x| -> Result<Option<f64>> {
            let per_station = demand_rate / x;
            match kind {
                QueueKind::Charging => match erlang_c_wait(per_station, charge_spec) {
                    Ok(mq) => Ok(Some(mq.wait)),
                    Err(Error::UnstableQueue { .. }) => Ok(None),
                    Err(e) => Err(e),
                },
                QueueKind::Swapping => {
                    let chain =
                        swap_chain_build(per_station, swap_spec, charge_spec.mean_charge_hours)?;
                    Ok(Some(swap_wait(&chain)?.wait))
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ConvexityRow> = stations
        .iter()
        .zip(&waits)
        .map(|(&x, &w)| ConvexityRow { stations: x, wait: w, second_difference: None, flagged: false })
        .collect();
    for idx in 1..rows.len().saturating_sub(1) {
        if let (Some(a), Some(b), Some(c)) = (waits[idx - 1], waits[idx], waits[idx + 1]) {
            let dd = c - 2.0 * b + a;
            rows[idx].second_difference = Some(dd);
            rows[idx].flagged = dd < -CONVEXITY_TOL;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn paper_swap_spec() -> SwapStationSpec {
        SwapStationSpec {
            bays: 1,
            chargers: 10,
            batteries: 10,
            queue_capacity: 100,
            swap_hours: 1.0 / 12.0,
        }
    }

    #[test]
    fn access_time_examples() {
        assert_abs_diff_eq!(access_time(4.0, 0.1).unwrap(), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(access_time(1.0, 0.1).unwrap(), 0.1, epsilon = 1e-15);
        assert!(access_time(0.0, 0.1).is_err());
    }

    #[test]
    fn erlang_reduces_to_mm1() {
        // V=1, lambda=0.5, tau=1: Wq = rho/(mu - lambda) = 1.0 h.
        let spec = ChargeStationSpec { chargers: 1, mean_charge_hours: 1.0 };
        let mq = erlang_c_wait(0.5, &spec).unwrap();
        assert_abs_diff_eq!(mq.wait, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mq.utilization, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(mq.empty_prob, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn erlang_two_server_hand_value() {
        // V=2, lambda=1, tau=1: P0 = 1/3, Wq = 1/3 h.
        let spec = ChargeStationSpec { chargers: 2, mean_charge_hours: 1.0 };
        let mq = erlang_c_wait(1.0, &spec).unwrap();
        assert_abs_diff_eq!(mq.empty_prob, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mq.wait, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn erlang_unstable_guard() {
        let spec = ChargeStationSpec { chargers: 10, mean_charge_hours: 1.0 };
        assert!(matches!(
            erlang_c_wait(10.001, &spec),
            Err(Error::UnstableQueue { .. })
        ));
    }

    #[test]
    fn erlang_wait_vanishes_with_many_stations() {
        let spec = ChargeStationSpec { chargers: 10, mean_charge_hours: 1.0 };
        let mq = erlang_c_wait(10.0 / 1e3, &spec).unwrap();
        assert!(mq.wait < 1e-12);
    }

    #[test]
    fn charging_probe_is_decreasing_and_convex() {
        let xs: Vec<f64> = (1..=20).map(|x| x as f64).collect();
        let rows = convexity_probe(
            QueueKind::Charging,
            10.0,
            &xs,
            &ChargeStationSpec { chargers: 10, mean_charge_hours: 1.0 },
            &paper_swap_spec(),
        )
        .unwrap();
        // x = 1 puts rho = 1: reported unstable, not an error.
        assert!(rows[0].wait.is_none());
        let stable: Vec<f64> = rows.iter().filter_map(|r| r.wait).collect();
        assert!(stable.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(rows.iter().all(|r| !r.flagged));
    }

    #[test]
    fn single_point_probe_has_no_second_differences() {
        let rows = convexity_probe(
            QueueKind::Charging,
            10.0,
            &[1.0],
            &ChargeStationSpec { chargers: 10, mean_charge_hours: 1.0 },
            &paper_swap_spec(),
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].second_difference.is_none());
    }
}
