//! Passenger side of the market: pickup times, binary-logit demand, and
//! flow-balance residuals.

use ndarray::{Array1, Array2};

use crate::{Error, Result};

/// Square-root pickup law: phi / sqrt(total idle vehicles).
pub fn pickup_time(idle_ev: f64, idle_gas: f64, phi: f64) -> Result<f64> {
    let total = idle_ev + idle_gas;
    if total <= 0.0 {
        return Err(Error::Domain(format!(
            "pickup time undefined with no idle vehicles (total {total})"
        )));
    }
    Ok(phi / total.sqrt())
}

/// Realized demand for one origin/destination pair under the binary logit
/// split between ride-hailing (cost p*tau + alpha*w_p) and the outside
/// option (cost p0*tau). The signature isolates the demand curve so an
/// alternative split could replace this one without touching callers.
pub fn demand(
    base: f64,
    price: f64,
    trip_time: f64,
    pickup: f64,
    alpha: f64,
    logit_sensitivity: f64,
    outside_price: f64,
) -> f64 {
    let cost = price * trip_time + alpha * pickup;
    let outside = outside_price * trip_time;
    base * logistic(-logit_sensitivity * (cost - outside))
}

/// Numerically stable 1/(1+e^(-x)).
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Net vehicle outflow minus inflow per zone. Zero everywhere iff the flow
/// pattern is balanced; used as an equality constraint in the original
/// problem and dropped in the relaxation.
pub fn flow_residual(demand: &Array2<f64>, rebalance: &Array2<f64>) -> Array1<f64> {
    let m = demand.nrows();
    let mut res = Array1::zeros(m);
    for i in 0..m {
        let mut out = 0.0;
        let mut inflow = 0.0;
        for j in 0..m {
            out += demand[[i, j]] + rebalance[[i, j]];
            inflow += demand[[j, i]] + rebalance[[j, i]];
        }
        res[i] = out - inflow;
    }
    res
}
