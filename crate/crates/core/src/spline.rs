//! Natural cubic smoothing splines in Reinsch form.
//!
//! `fit` minimizes `sum_i (y_i - f(x_i))^2 + lambda * int f''(t)^2 dt` over
//! natural cubic splines with knots at the data abscissae. The stationary
//! system is solved in the banded Reinsch form: with `Q` the second-difference
//! matrix and `R` the tridiagonal Gram matrix of the second-derivative basis,
//! solve `(R + lambda * Q^T Q) g = Q^T y` (pentadiagonal, SPD) and recover the
//! fitted knot values as `a = y - lambda * Q g`. `lambda` is the raw roughness
//! multiplier; it is not rescaled by the data spacing.
//!
//! Used for venous-trace denoising/interpolation on the minutes axis and for
//! Glucodensity channel extraction on the hours axis.

use thiserror::Error;

use crate::data::{AlignedTrace, GRID_LEN, SENTINEL};

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("need at least 2 points to fit a spline, got {0}")]
    TooFewPoints(usize),
    #[error("abscissae must be strictly increasing (violation at index {0})")]
    NonIncreasing(usize),
    #[error("non-finite input at index {0}")]
    NonFinite(usize),
    #[error("negative smoothing penalty {0}")]
    NegativePenalty(f64),
}

/// A fitted natural cubic smoothing spline.
///
/// Piecewise cubic, C2 at interior knots, with natural boundary conditions
/// (second derivative zero at both end knots). Outside the knot range the
/// boundary interval's cubic is extrapolated.
#[derive(Debug, Clone)]
pub struct SplineFit {
    knots: Vec<f64>,
    /// Per-interval `[c0, c1, c2, c3]` in the local variable `u = t - knot[i]`.
    coeffs: Vec<[f64; 4]>,
    lambda: f64,
}

impl SplineFit {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Evaluate the spline or one of its first two derivatives.
    pub fn eval(&self, t: f64, order: u8) -> f64 {
        assert!(order <= 2, "order must be 0, 1, or 2");
        let i = self.interval_of(t);
        let u = t - self.knots[i];
        let [c0, c1, c2, c3] = self.coeffs[i];
        match order {
            0 => ((c3 * u + c2) * u + c1) * u + c0,
            1 => (3.0 * c3 * u + 2.0 * c2) * u + c1,
            _ => 6.0 * c3 * u + 2.0 * c2,
        }
    }

    /// Integrated squared second derivative, from the coefficients.
    pub fn roughness(&self) -> f64 {
        let mut acc = 0.0;
        for (i, [_, _, c2, c3]) in self.coeffs.iter().enumerate() {
            let h = self.knots[i + 1] - self.knots[i];
            // int_0^h (2 c2 + 6 c3 u)^2 du
            acc += 4.0 * c2 * c2 * h + 12.0 * c2 * c3 * h * h + 12.0 * c3 * c3 * h * h * h;
        }
        acc
    }

    fn interval_of(&self, t: f64) -> usize {
        let n = self.knots.len();
        if t <= self.knots[0] {
            return 0;
        }
        if t >= self.knots[n - 1] {
            return n - 2;
        }
        // partition_point: first knot > t, minus one.
        let idx = self.knots.partition_point(|&k| k <= t);
        (idx - 1).min(n - 2)
    }
}

/// Fit a natural cubic smoothing spline with roughness penalty `lambda`.
pub fn fit(x: &[f64], y: &[f64], lambda: f64) -> Result<SplineFit, SplineError> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(SplineError::TooFewPoints(n.min(y.len())));
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(SplineError::NegativePenalty(lambda));
    }
    for i in 0..n {
        if !x[i].is_finite() || !y[i].is_finite() {
            return Err(SplineError::NonFinite(i));
        }
        if i > 0 && x[i] <= x[i - 1] {
            return Err(SplineError::NonIncreasing(i));
        }
    }

    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();

    // Interior second derivatives. n == 2 has no interior: the fit is the
    // chord, which is also the exact minimizer (zero penalty, zero residual
    // over lines is unreachable, but among natural splines on two knots only
    // lines exist and the interpolating line has zero residual).
    let (a, m) = if n == 2 {
        (y.to_vec(), vec![0.0, 0.0])
    } else {
        let k = n - 2;
        // Column j of Q has entries (1/h_j, -1/h_j - 1/h_{j+1}, 1/h_{j+1})
        // at rows (j, j+1, j+2).
        let q = |j: usize| -> [f64; 3] {
            [1.0 / h[j], -1.0 / h[j] - 1.0 / h[j + 1], 1.0 / h[j + 1]]
        };

        // B = R + lambda * Q^T Q, pentadiagonal SPD, stored by diagonals.
        let mut d0 = vec![0.0; k];
        let mut d1 = vec![0.0; k.saturating_sub(1)];
        let mut d2 = vec![0.0; k.saturating_sub(2)];
        for j in 0..k {
            let qj = q(j);
            d0[j] = (h[j] + h[j + 1]) / 3.0
                + lambda * (qj[0] * qj[0] + qj[1] * qj[1] + qj[2] * qj[2]);
        }
        for j in 0..k.saturating_sub(1) {
            let qj = q(j);
            let qn = q(j + 1);
            d1[j] = h[j + 1] / 6.0 + lambda * (qj[1] * qn[0] + qj[2] * qn[1]);
        }
        for j in 0..k.saturating_sub(2) {
            let qj = q(j);
            let qn = q(j + 2);
            d2[j] = lambda * (qj[2] * qn[0]);
        }

        // rhs = Q^T y (second divided differences).
        let rhs: Vec<f64> = (0..k)
            .map(|j| (y[j + 2] - y[j + 1]) / h[j + 1] - (y[j + 1] - y[j]) / h[j])
            .collect();

        let gamma = solve_banded_spd(&d0, &d1, &d2, &rhs);

        // a = y - lambda * Q gamma; row i receives columns i-2, i-1, i.
        let mut a = y.to_vec();
        for j in 0..k {
            let qj = q(j);
            a[j] -= lambda * qj[0] * gamma[j];
            a[j + 1] -= lambda * qj[1] * gamma[j];
            a[j + 2] -= lambda * qj[2] * gamma[j];
        }

        let mut m = vec![0.0; n];
        m[1..n - 1].copy_from_slice(&gamma);
        (a, m)
    };

    let coeffs = (0..n - 1)
        .map(|i| {
            let hi = h[i];
            let c1 = (a[i + 1] - a[i]) / hi - hi * (2.0 * m[i] + m[i + 1]) / 6.0;
            [a[i], c1, m[i] / 2.0, (m[i + 1] - m[i]) / (6.0 * hi)]
        })
        .collect();

    Ok(SplineFit {
        knots: x.to_vec(),
        coeffs,
        lambda,
    })
}

/// Cholesky solve for a pentadiagonal SPD system given by its diagonals.
fn solve_banded_spd(d0: &[f64], d1: &[f64], d2: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = d0.len();
    // L stored as its own three diagonals.
    let mut l0 = vec![0.0; n];
    let mut l1 = vec![0.0; n.saturating_sub(1)];
    let mut l2 = vec![0.0; n.saturating_sub(2)];
    for i in 0..n {
        if i >= 2 {
            l2[i - 2] = d2[i - 2] / l0[i - 2];
        }
        if i >= 1 {
            let mut s = d1[i - 1];
            if i >= 2 {
                s -= l2[i - 2] * l1[i - 2];
            }
            l1[i - 1] = s / l0[i - 1];
        }
        let mut s = d0[i];
        if i >= 1 {
            s -= l1[i - 1] * l1[i - 1];
        }
        if i >= 2 {
            s -= l2[i - 2] * l2[i - 2];
        }
        l0[i] = s.max(f64::MIN_POSITIVE).sqrt();
    }
    // Forward substitution L z = rhs.
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = rhs[i];
        if i >= 1 {
            s -= l1[i - 1] * z[i - 1];
        }
        if i >= 2 {
            s -= l2[i - 2] * z[i - 2];
        }
        z[i] = s / l0[i];
    }
    // Back substitution L^T g = z.
    let mut g = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        if i + 1 < n {
            s -= l1[i] * g[i + 1];
        }
        if i + 2 < n {
            s -= l2[i] * g[i + 2];
        }
        g[i] = s / l0[i];
    }
    g
}

/// Smooth an aligned OGTT trace: fit on the observed slots, evaluate at all
/// 39 grid positions. Sentinel slots receive interpolated values; the mask is
/// preserved so provenance survives smoothing.
pub fn smooth_trace(trace: &AlignedTrace, lambda: f64) -> Result<AlignedTrace, SplineError> {
    let grid = crate::data::grid_minutes();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..GRID_LEN {
        if trace.mask[i] {
            xs.push(grid[i]);
            ys.push(trace.values[i]);
        }
    }
    if xs.len() < 2 {
        return Err(SplineError::TooFewPoints(xs.len()));
    }
    let f = fit(&xs, &ys, lambda)?;
    let mut out = trace.clone();
    for i in 0..GRID_LEN {
        out.values[i] = f.eval(grid[i], 0);
    }
    debug_assert!(out.values.iter().all(|v| v.is_finite() && *v != SENTINEL));
    Ok(out)
}
