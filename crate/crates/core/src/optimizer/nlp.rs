//! Generic constrained-NLP machinery: an augmented-Lagrangian outer loop
//! (equalities via multipliers + quadratic penalty, inequalities via the
//! Powell-Hestenes-Rockafellar form) around a spectral projected-gradient
//! inner solver over box constraints. Gradients come from forward finite
//! differences; the market objective has no closed-form derivative through
//! the queue waits.

use rayon::prelude::*;

/// A smooth maximization problem with box bounds, equality constraints
/// h(z) = 0, and inequality constraints g(z) >= 0. Implementations should
/// scale constraint rows to O(1).
pub trait ConstrainedProblem: Sync {
    fn dim(&self) -> usize;
    fn bounds(&self) -> (&[f64], &[f64]);
    /// (objective, equalities, inequalities) in one pass.
    fn eval_all(&self, z: &[f64]) -> (f64, Vec<f64>, Vec<f64>);
}

#[derive(Debug, Clone)]
pub struct AlConfig {
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub constraint_tol: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub inner_tol: f64,
}

#[derive(Debug, Clone)]
pub struct AlResult {
    pub z: Vec<f64>,
    pub objective: f64,
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
    pub max_violation: f64,
    pub converged: bool,
}

pub fn augmented_lagrangian<P: ConstrainedProblem>(
    problem: &P,
    z0: Vec<f64>,
    cfg: &AlConfig,
) -> AlResult {
    let (lo, hi) = problem.bounds();
    let mut z = z0;
    project(&mut z, lo, hi);
    let (obj0, h0, g0) = problem.eval_all(&z);
    let mut theta = vec![0.0; h0.len()];
    let mut mu = vec![0.0; g0.len()];
    let viol0 = violation(&h0, &g0);
    // Penalty sized so the constraint terms register against the objective.
    let mut penalty =
        (cfg.penalty_init * (1.0 + obj0.abs()) / (1.0 + viol0 * viol0)).clamp(1.0, 1e8);
    let mut prev_viol = f64::INFINITY;
    let mut last = (obj0, h0, g0);

    for _outer in 0..cfg.outer_iters {
        let th = theta.clone();
        let m = mu.clone();
        let c = penalty;
        let al = move |zz: &[f64]| -> f64 {
            let (obj, h, g) = problem.eval_all(zz);
            let mut val = -obj;
            for (hv, t) in h.iter().zip(&th) {
                val += t * hv + 0.5 * c * hv * hv;
            }
            for (gv, mv) in g.iter().zip(&m) {
                let active = (mv - c * gv).max(0.0);
                val += (active * active - mv * mv) / (2.0 * c);
            }
            val
        };
        z = spg_minimize(&al, lo, hi, z, cfg.inner_iters, cfg.inner_tol).0;

        let (obj, h, g) = problem.eval_all(&z);
        for (t, hv) in theta.iter_mut().zip(&h) {
            *t += penalty * hv;
        }
        for (mv, gv) in mu.iter_mut().zip(&g) {
            *mv = (*mv - penalty * gv).max(0.0);
        }
        let viol = violation(&h, &g);
        last = (obj, h, g);
        if viol <= cfg.constraint_tol {
            return AlResult {
                z,
                objective: last.0,
                eq_multipliers: theta,
                ineq_multipliers: mu,
                max_violation: viol,
                converged: true,
            };
        }
        if viol > 0.25 * prev_viol {
            penalty = (penalty * cfg.penalty_growth).min(1e12);
        }
        prev_viol = viol;
    }
    let viol = violation(&last.1, &last.2);
    AlResult {
        z,
        objective: last.0,
        eq_multipliers: theta,
        ineq_multipliers: mu,
        max_violation: viol,
        converged: viol <= cfg.constraint_tol,
    }
}

fn violation(h: &[f64], g: &[f64]) -> f64 {
    let eq = h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let ineq = g.iter().fold(0.0f64, |a, v| a.max((-v).max(0.0)));
    eq.max(ineq)
}

pub fn project(z: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..z.len() {
        z[i] = z[i].clamp(lo[i], hi[i]);
    }
}

/// Spectral projected gradient (Barzilai-Borwein steps, nonmonotone line
/// search) for minimizing a smooth function over a box.
pub fn spg_minimize(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    lo: &[f64],
    hi: &[f64],
    mut z: Vec<f64>,
    max_iters: usize,
    tol: f64,
) -> (Vec<f64>, f64) {
    project(&mut z, lo, hi);
    let mut fz = f(&z);
    if !fz.is_finite() {
        return (z, fz);
    }
    let mut grad = fd_gradient(f, &z, fz, lo, hi);
    let gmax = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut alpha = (1.0 / gmax.max(1e-12)).clamp(1e-10, 1e4);
    let mut history = std::collections::VecDeque::from(vec![fz]);

    for _ in 0..max_iters {
        // Unit-step projected gradient for the stopping test.
        let mut pg: f64 = 0.0;
        for i in 0..z.len() {
            pg = pg.max(((z[i] - grad[i]).clamp(lo[i], hi[i]) - z[i]).abs());
        }
        if pg <= tol * (1.0 + fz.abs()) {
            break;
        }
        let mut direction = vec![0.0; z.len()];
        let mut gtd = 0.0;
        for i in 0..z.len() {
            direction[i] = (z[i] - alpha * grad[i]).clamp(lo[i], hi[i]) - z[i];
            gtd += grad[i] * direction[i];
        }
        if gtd >= 0.0 {
            alpha = (alpha * 0.1).max(1e-10);
            continue;
        }
        let fmax = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sigma = 1.0;
        let mut z_new;
        let mut f_new;
        let mut ok = false;
        loop {
            z_new = z
                .iter()
                .zip(&direction)
                .map(|(a, d)| a + sigma * d)
                .collect::<Vec<_>>();
            f_new = f(&z_new);
            if f_new.is_finite() && f_new <= fmax + 1e-4 * sigma * gtd {
                ok = true;
                break;
            }
            sigma *= 0.5;
            if sigma < 1e-10 {
                break;
            }
        }
        if !ok {
            break;
        }
        let grad_new = fd_gradient(f, &z_new, f_new, lo, hi);
        let mut sy = 0.0;
        let mut ss = 0.0;
        for i in 0..z.len() {
            let s = z_new[i] - z[i];
            let y = grad_new[i] - grad[i];
            sy += s * y;
            ss += s * s;
        }
        alpha = if sy > 1e-16 {
            (ss / sy).clamp(1e-10, 1e8)
        } else {
            (alpha * 2.0).min(1e8)
        };
        z = z_new;
        fz = f_new;
        grad = grad_new;
        history.push_back(fz);
        if history.len() > 8 {
            history.pop_front();
        }
    }
    (z, fz)
}

/// Forward finite-difference gradient; switches to a backward step at the
/// upper bound and skips pinned coordinates. Components are independent,
/// so the parallel evaluation is deterministic.
pub fn fd_gradient(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    z: &[f64],
    fz: f64,
    lo: &[f64],
    hi: &[f64],
) -> Vec<f64> {
    (0..z.len())
        .into_par_iter()
        .map(|i| {
            if hi[i] - lo[i] < 1e-14 {
                return 0.0;
            }
            let step = 1e-6 * (1.0 + z[i].abs());
            let (value, h) = if z[i] + step <= hi[i] {
                (z[i] + step, step)
            } else {
                (z[i] - step, -step)
            };
            let mut zp = z.to_vec();
            zp[i] = value;
            let fp = f(&zp);
            if fp.is_finite() {
                (fp - fz) / h
            } else {
                0.0
            }
        })
        .collect()
}
