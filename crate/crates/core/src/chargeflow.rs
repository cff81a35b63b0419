//! EV movement chain: flow counts between zones, the induced transition
//! matrix, its stationary distribution (the spatial shape of charging
//! demand), and the energy-balance scaling that pins the total charging
//! rate.

use ndarray::{Array1, Array2};

use crate::numerics::solve_dense;
use crate::{Error, Result};

/// Average number of EVs travelling from zone i to zone j, plus the EV
/// dispatch share R per zone. Diagonal entries collect idle vehicles,
/// pickup legs for every outbound trip, and intra-zone delivery and
/// rebalancing; off-diagonal entries are cross-zone delivery and
/// rebalancing legs.
pub fn demand_matrix(
    idle_ev: &Array1<f64>,
    idle_gas: &Array1<f64>,
    demand: &Array2<f64>,
    rebalance: &Array2<f64>,
    pickup: &Array1<f64>,
    trip_time: &Array2<f64>,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let m = idle_ev.len();
    let mut flows = Array2::zeros((m, m));
    let mut share = Array1::zeros(m);
    for i in 0..m {
        if idle_ev[i] <= 0.0 {
            return Err(Error::Domain(format!(
                "idle_ev[{i}] must be strictly positive, got {}",
                idle_ev[i]
            )));
        }
        share[i] = idle_ev[i] / (idle_ev[i] + idle_gas[i]);
        let pickup_total: f64 = (0..m).map(|j| demand[[i, j]] * pickup[i]).sum();
        flows[[i, i]] = idle_ev[i]
            + share[i]
                * (pickup_total
                    + demand[[i, i]] * trip_time[[i, i]]
                    + rebalance[[i, i]] * trip_time[[i, i]]);
        for j in 0..m {
            if j != i {
                flows[[i, j]] =
                    share[i] * (demand[[i, j]] + rebalance[[i, j]]) * trip_time[[i, j]];
            }
        }
    }
    Ok((flows, share))
}

/// Row-normalizes the EV flow counts into a transition matrix.
pub fn transition_matrix(flows: &Array2<f64>) -> Result<Array2<f64>> {
    let m = flows.nrows();
    let mut p = flows.clone();
    for i in 0..m {
        let total: f64 = flows.row(i).sum();
        if total <= 0.0 {
            return Err(Error::Domain(format!("zero row sum in EV flow matrix, row {i}")));
        }
        let mut row = p.row_mut(i);
        row /= total;
    }
    Ok(p)
}

/// Unique positive stationary row vector of a row-stochastic matrix, by a
/// dense linear solve of (P' - I) n' = 0 with the normalization equation
/// replacing one redundant balance row.
///
/// Strict positivity of P guarantees existence and uniqueness. Matrices
/// with zero entries are still attempted; a reducible chain comes back as
/// an error.
pub fn stationary_distribution(p: &Array2<f64>) -> Result<Array1<f64>> {
    let m = p.nrows();
    assert_eq!(p.ncols(), m);
    if p.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::Domain("transition matrix must be nonnegative and finite".into()));
    }
    if !p.iter().any(|&v| v > 0.0) {
        return Err(Error::ReducibleChain);
    }
    if p.iter().any(|&v| v == 0.0) && !strongly_connected(p) {
        return Err(Error::ReducibleChain);
    }
    // Rows of (P^T - I), last balance row swapped for sum(n) = 1.
    let mut a = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            a[[i, j]] = p[[j, i]] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..m {
        a[[m - 1, j]] = 1.0;
    }
    let mut b = Array1::zeros(m);
    b[m - 1] = 1.0;
    let n = solve_dense(&a, &b)?;
    if n.iter().any(|&v| v <= 0.0) {
        return Err(Error::ReducibleChain);
    }
    let residual = stationary_residual(&n, p);
    if residual > 1e-10 {
        return Err(Error::Domain(format!(
            "stationary solve residual {residual:.3e} exceeds 1e-10"
        )));
    }
    Ok(n)
}

/// Max-norm residual of n P - n.
pub fn stationary_residual(n: &Array1<f64>, p: &Array2<f64>) -> f64 {
    let m = p.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..m {
        let mut v = 0.0;
        for i in 0..m {
            v += n[i] * p[[i, j]];
        }
        worst = worst.max((v - n[j]).abs());
    }
    worst
}

fn strongly_connected(p: &Array2<f64>) -> bool {
    let m = p.nrows();
    let reach = |transpose: bool| {
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..m {
                let edge = if transpose { p[[j, i]] } else { p[[i, j]] };
                if edge > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(false) && reach(true)
}

/// Energy-balance scaling (the feasibility condition and the total charging
/// rate K). `ev_operating_time` is the fleet time spent in operations:
/// idle + pickup + delivery + rebalancing, EV share only.
///
/// Returns (K, k) where k_i = n_i * K.
pub fn total_charging_rate(
    charge_dist: &Array1<f64>,
    plug_share: &Array1<f64>,
    access_c: &Array1<f64>,
    access_s: &Array1<f64>,
    range_hours: f64,
    ev_operating_time: f64,
) -> Result<(f64, Array1<f64>)> {
    let margin = feasibility_margin(charge_dist, plug_share, access_c, access_s, range_hours);
    if margin <= 0.0 {
        return Err(Error::Infeasible(format!(
            "feasibility margin {margin:.6} <= 0: facility access times consume the battery range"
        )));
    }
    let total = ev_operating_time / margin;
    Ok((total, charge_dist * total))
}

/// phi_E = range - sum_i r_i n_i l^c_i - sum_i (1-r_i) n_i l^s_i.
/// Terms with a zero share skip the access time entirely, so zones without
/// one facility type stay well-defined.
pub fn feasibility_margin(
    charge_dist: &Array1<f64>,
    plug_share: &Array1<f64>,
    access_c: &Array1<f64>,
    access_s: &Array1<f64>,
    range_hours: f64,
) -> f64 {
    let mut margin = range_hours;
    for i in 0..charge_dist.len() {
        if plug_share[i] > 0.0 {
            margin -= plug_share[i] * charge_dist[i] * access_c[i];
        }
        if plug_share[i] < 1.0 {
            margin -= (1.0 - plug_share[i]) * charge_dist[i] * access_s[i];
        }
    }
    margin
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Power-iteration oracle, independent of the linear-solve path.
    fn power_iteration(p: &Array2<f64>, steps: usize) -> Array1<f64> {
        let m = p.nrows();
        let mut n = Array1::from_elem(m, 1.0 / m as f64);
        for _ in 0..steps {
            let mut next: Array1<f64> = Array1::zeros(m);
            for j in 0..m {
                for i in 0..m {
                    next[j] += n[i] * p[[i, j]];
                }
            }
            let total = next.sum();
            n = next / total;
        }
        n
    }

    fn random_stochastic(m: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Array2::zeros((m, m));
        for i in 0..m {
            let mut total = 0.0;
            for j in 0..m {
                let v: f64 = rng.random::<f64>() + 0.01;
                p[[i, j]] = v;
                total += v;
            }
            for j in 0..m {
                p[[i, j]] /= total;
            }
        }
        p
    }

    #[test]
    fn idle_only_fleet_gives_diagonal_flows() {
        let idle_ev = arr1(&[2.0, 3.0]);
        let idle_gas = arr1(&[1.0, 1.0]);
        let zero = Array2::zeros((2, 2));
        let tau = arr2(&[[0.1, 0.2], [0.2, 0.1]]);
        let (d, r) = demand_matrix(&idle_ev, &idle_gas, &zero, &zero, &arr1(&[0.0, 0.0]), &tau).unwrap();
        assert_abs_diff_eq!(d[[0, 0]], 2.0);
        assert_abs_diff_eq!(d[[1, 1]], 3.0);
        assert_abs_diff_eq!(d[[0, 1]], 0.0);
        assert_abs_diff_eq!(r[0], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn hand_evaluated_two_zone_flows() {
        let idle_ev = arr1(&[1.0, 1.0]);
        let idle_gas = arr1(&[1.0, 1.0]);
        let mut lam = Array2::zeros((2, 2));
        lam[[0, 1]] = 10.0;
        let tau = arr2(&[[0.1, 0.2], [0.2, 0.1]]);
        let (d, r) = demand_matrix(&idle_ev, &idle_gas, &lam, &Array2::zeros((2, 2)), &arr1(&[0.0, 0.0]), &tau).unwrap();
        assert_abs_diff_eq!(r[0], 0.5);
        assert_abs_diff_eq!(d[[0, 0]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[[0, 1]], 1.0, epsilon = 1e-15); // 0.5 * 10 * 0.2
        assert_abs_diff_eq!(d[[1, 0]], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[[1, 1]], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn vanishing_gas_fleet_drives_share_to_one() {
        let idle_ev = arr1(&[5.0, 5.0]);
        let idle_gas = arr1(&[1e-9, 0.0]);
        let zero = Array2::zeros((2, 2));
        let tau = arr2(&[[0.1, 0.2], [0.2, 0.1]]);
        let (_, r) = demand_matrix(&idle_ev, &idle_gas, &zero, &zero, &arr1(&[0.0, 0.0]), &tau).unwrap();
        assert!(r.iter().all(|&v| v > 1.0 - 1e-9));
    }

    #[test]
    fn transition_examples() {
        let p = transition_matrix(&arr2(&[[1.0, 1.0], [1.0, 1.0]])).unwrap();
        assert_abs_diff_eq!(p[[0, 0]], 0.5);
        let p = transition_matrix(&arr2(&[[9.0, 1.0], [5.0, 5.0]])).unwrap();
        assert_abs_diff_eq!(p[[0, 0]], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(p[[1, 0]], 0.5, epsilon = 1e-15);
        for seed in 0..5 {
            let d = random_stochastic(6, seed);
            let p = transition_matrix(&d).unwrap();
            for i in 0..6 {
                assert_abs_diff_eq!(p.row(i).sum(), 1.0, epsilon = 1e-12);
            }
        }
        assert!(transition_matrix(&arr2(&[[0.0, 0.0], [1.0, 1.0]])).is_err());
    }

    #[test]
    fn stationary_two_state_by_hand() {
        let p = arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        let n = stationary_distribution(&p).unwrap();
        assert_abs_diff_eq!(n[0], 0.5, epsilon = 1e-14);

        let p = arr2(&[[0.9, 0.1], [0.5, 0.5]]);
        let n = stationary_distribution(&p).unwrap();
        assert_abs_diff_eq!(n[0], 5.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n[1], 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn stationary_matches_power_iteration() {
        for seed in [1, 2, 3] {
            let p = random_stochastic(6, seed);
            let direct = stationary_distribution(&p).unwrap();
            let oracle = power_iteration(&p, 10_000);
            for i in 0..6 {
                assert_abs_diff_eq!(direct[i], oracle[i], epsilon = 1e-8);
            }
            assert!(stationary_residual(&direct, &p) <= 1e-10);
        }
    }

    #[test]
    fn stationary_invariant_under_row_rescaling() {
        let d = random_stochastic(5, 11);
        let p1 = transition_matrix(&d).unwrap();
        let mut d2 = d.clone();
        for (i, c) in [3.0, 0.5, 7.0, 1.25, 10.0].iter().enumerate() {
            let mut row = d2.row_mut(i);
            row *= *c;
        }
        let p2 = transition_matrix(&d2).unwrap();
        let n1 = stationary_distribution(&p1).unwrap();
        let n2 = stationary_distribution(&p2).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(n1[i], n2[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let p = arr2(&[[0.5, 0.5], [0.0, 1.0]]);
        assert!(matches!(stationary_distribution(&p), Err(Error::ReducibleChain)));
    }

    #[test]
    fn charging_rate_examples() {
        let n = arr1(&[0.5, 0.5]);
        let zero = arr1(&[0.0, 0.0]);
        let r1 = arr1(&[1.0, 1.0]);
        // Zero access time: K = 60 / 6 = 10.
        let (k_total, k) = total_charging_rate(&n, &r1, &zero, &zero, 6.0, 60.0).unwrap();
        assert_abs_diff_eq!(k_total, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k[0], 5.0, epsilon = 1e-12);

        // Uniform n, all plug-in, l^c = 1: margin = 6 - 1 = 5, K = 12.
        let ones = arr1(&[1.0, 1.0]);
        let (k_total, _) = total_charging_rate(&n, &r1, &ones, &zero, 6.0, 60.0).unwrap();
        assert_abs_diff_eq!(k_total, 12.0, epsilon = 1e-12);

        // Negative margin errors out.
        let huge = arr1(&[7.0, 7.0]);
        assert!(matches!(
            total_charging_rate(&n, &r1, &huge, &zero, 6.0, 60.0),
            Err(Error::Infeasible(_))
        ));
    }
}
