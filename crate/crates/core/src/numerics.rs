//! Small numerical kernels shared across modules: dense LU solves (the
//! stationary-distribution systems are a few hundred unknowns at most, and
//! the swap-station chain ~1100), monotone cubic interpolation for the
//! swap-wait table, and Latin hypercube sampling for multistarts.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Solves `A x = b` by LU with partial pivoting, in place over a flat
/// row-major copy. Deterministic; no external linear algebra backend.
pub fn solve_dense(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let mut m: Vec<f64> = a.iter().copied().collect();
    let mut x: Vec<f64> = b.to_vec();
    lu_solve_flat(&mut m, n, &mut x)?;
    Ok(Array1::from_vec(x))
}

fn lu_solve_flat(m: &mut [f64], n: usize, b: &mut [f64]) -> Result<()> {
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].abs();
        for row in (col + 1)..n {
            let v = m[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Singular);
        }
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = m[col * n + col];
        for row in (col + 1)..n {
            let factor = m[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            m[row * n + col] = 0.0;
            let (head, tail) = m.split_at_mut(row * n);
            let src = &head[col * n + col + 1..col * n + n];
            let dst = &mut tail[col + 1..n];
            for (t, s) in dst.iter_mut().zip(src) {
                *t -= factor * s;
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = b[col];
        for j in (col + 1)..n {
            v -= m[col * n + j] * b[j];
        }
        b[col] = v / m[col * n + col];
        if !b[col].is_finite() {
            return Err(Error::Singular);
        }
    }
    Ok(())
}

/// Monotone piecewise-cubic interpolant (Fritsch–Carlson slopes).
/// Evaluation outside the knot range clamps to the end values.
#[derive(Debug, Clone)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert!(xs.len() == ys.len() && xs.len() >= 2);
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut m = vec![0.0; n];
        m[0] = edge_slope(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], *delta.get(1).unwrap_or(&delta[0]));
        m[n - 1] = edge_slope(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            delta[n - 2],
            if n >= 3 { delta[n - 3] } else { delta[n - 2] },
        );
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] <= 0.0 {
                m[k] = 0.0;
            } else {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                m[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        Pchip { xs, ys, slopes: m }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.ys[i],
            Err(i) => i - 1,
        };
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.slopes[k], self.slopes[k + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * h * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * h * (t3 - t2)
    }
}

fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    // Fritsch–Butland one-sided estimate with monotonicity clamp.
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Latin hypercube sample of `count` points in `[0,1]^dims`.
pub fn latin_hypercube(rng: &mut ChaCha8Rng, count: usize, dims: usize) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dims]; count];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..count).collect();
        // Fisher-Yates with the shared stream keeps runs reproducible.
        for i in (1..count).rev() {
            let j = rng.random_range(0..=i);
            strata.swap(i, j);
        }
        for (s, point) in points.iter_mut().enumerate() {
            let u: f64 = rng.random();
            point[d] = (strata[s] as f64 + u) / count as f64;
        }
    }
    points
}

/// Second differences of a sequence of (x, y) points on a uniform x grid.
pub fn second_differences(ys: &[f64]) -> Vec<f64> {
    if ys.len() < 3 {
        return Vec::new();
    }
    ys.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect()
}
