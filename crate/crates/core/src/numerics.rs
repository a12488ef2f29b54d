//! Shared numerical kernels: stabilized exponential sums, small dense linear
//! solves, a safeguarded root finder for strictly decreasing functions, and a
//! damped Newton minimizer for smooth convex functions.
//!
//! Every quantity of the form log E sum_i e^{a_i} in this library is evaluated
//! through [`log_sum_exp`] or [`softmax`], which shift by the maximum exponent
//! so that overflow is impossible and the relative error stays at machine
//! precision even when the exponents spread over thousands of units.

use crate::error::{Error, Result};

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// log sum_i e^{a_i}, max-shifted. Empty input and all-(-inf) input give -inf.
pub fn log_sum_exp(a: &[f64]) -> f64 {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        // All -inf (or empty): the sum is 0. +inf propagates as +inf.
        return m;
    }
    let s: f64 = a.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Normalized exponential weights of a log-vector.
#[derive(Debug, Clone)]
pub struct Softmax {
    /// log sum_i e^{a_i}.
    pub log_z: f64,
    /// w_i = e^{a_i - log_z}, summing to 1.
    pub weights: Vec<f64>,
}

/// Computes e^{a_i} / sum_j e^{a_j} together with the log normalizer.
pub fn softmax(a: &[f64]) -> Softmax {
    let log_z = log_sum_exp(a);
    let weights = if log_z.is_finite() {
        a.iter().map(|&x| (x - log_z).exp()).collect()
    } else {
        vec![0.0; a.len()]
    };
    Softmax { log_z, weights }
}

/// Solves the n-by-n system A x = b by Gaussian elimination with partial
/// pivoting. `a` is row-major and consumed as scratch. Returns `None` when a
/// pivot falls below 1e-13 times the largest entry (singular within noise).
pub fn solve_linear(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1e-300);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if a[pivot_row * n + col].abs() < 1e-13 * scale {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let inv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] * inv;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * x[k];
        }
        x[row] = s / a[row * n + row];
    }
    Some(x)
}

/// Root of a strictly decreasing C^1 function.
///
/// `f` returns the value and the derivative. The search starts from the
/// bracket `[hint - 1, hint + 1]` and doubles the width on the failing side
/// until the sign change is enclosed, then runs 60 bisection steps and 5
/// Newton polish steps clamped to the final bracket.
pub fn decreasing_root(
    f: impl Fn(f64) -> (f64, f64),
    hint: f64,
    what: &str,
) -> Result<f64> {
    let mut lo = hint - 1.0;
    let mut hi = hint + 1.0;
    let mut width = 2.0;
    // Decreasing: want f(lo) >= 0 >= f(hi).
    for _ in 0..80 {
        if f(lo).0 >= 0.0 {
            break;
        }
        hi = lo;
        width *= 2.0;
        lo -= width;
    }
    for _ in 0..80 {
        if f(hi).0 <= 0.0 {
            break;
        }
        lo = hi;
        width *= 2.0;
        hi += width;
    }
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if !(flo >= 0.0 && fhi <= 0.0) {
        return Err(Error::solver(what, flo.abs().min(fhi.abs())));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (v, _) = f(mid);
        if v >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * (1.0 + mid.abs()) {
            break;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..5 {
        let (v, dv) = f(t);
        if dv == 0.0 || !v.is_finite() {
            break;
        }
        let step = v / dv;
        let next = (t - step).clamp(lo, hi);
        if next == t {
            break;
        }
        t = next;
    }
    let (residual, _) = f(t);
    if residual.abs() > 1e-8 {
        return Err(Error::solver(what, residual.abs()));
    }
    Ok(t)
}

/// Result of [`minimize_convex`].
#[derive(Debug, Clone)]
pub struct Minimum {
    /// Minimizer.
    pub x: Vec<f64>,
    /// Objective value at the minimizer.
    pub value: f64,
    /// Gradient norm at the minimizer (the certified residual).
    pub grad_norm: f64,
}

/// Damped Newton minimization of a smooth convex function.
///
/// `f` returns (value, gradient, row-major Hessian). The iteration backtracks
/// along the Newton direction under the Armijo condition with c = 1e-4, adds a
/// diagonal ridge when the Hessian solve fails, and aborts with a solver error
/// when the iterate norm exceeds `norm_cap` (the infimum is then presumed to
/// be a recession limit rather than an attained minimum).
pub fn minimize_convex(
    x0: &[f64],
    f: impl Fn(&[f64]) -> (f64, Vec<f64>, Vec<f64>),
    norm_cap: f64,
    what: &str,
) -> Result<Minimum> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut value, mut grad, mut hess) = f(&x);
    for _ in 0..200 {
        let grad_norm = norm(&grad);
        if grad_norm <= 1e-11 * (1.0 + value.abs()) {
            return Ok(Minimum { x, value, grad_norm });
        }
        if norm(&x) > norm_cap {
            return Err(Error::solver(what, grad_norm));
        }
        // Newton direction, with a growing ridge if the solve is singular.
        let mut ridge = 0.0;
        let dir = loop {
            let mut a = hess.clone();
            if ridge > 0.0 {
                for i in 0..n {
                    a[i * n + i] += ridge;
                }
            }
            let mut rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            match solve_linear(&mut a, &mut rhs, n) {
                Some(d) => break d,
                None if ridge < 1e6 => {
                    ridge = if ridge == 0.0 { 1e-12 } else { ridge * 100.0 };
                }
                None => return Err(Error::solver(what, grad_norm)),
            }
        };
        let slope = dot(&grad, &dir);
        // A convex model guarantees descent; fall back to steepest descent if
        // rounding produced an ascent direction.
        let (dir, slope) = if slope < 0.0 {
            (dir, slope)
        } else {
            let d: Vec<f64> = grad.iter().map(|g| -g).collect();
            let s = -grad_norm * grad_norm;
            (d, s)
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> =
                x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (tv, tg, th) = f(&trial);
            if tv.is_finite() && tv <= value + 1e-4 * step * slope {
                x = trial;
                value = tv;
                grad = tg;
                hess = th;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No further progress possible at machine precision.
            let grad_norm = norm(&grad);
            if grad_norm <= 1e-6 * (1.0 + value.abs()) {
                return Ok(Minimum { x, value, grad_norm });
            }
            return Err(Error::solver(what, grad_norm));
        }
    }
    let grad_norm = norm(&grad);
    if grad_norm <= 1e-7 * (1.0 + value.abs()) {
        return Ok(Minimum { x, value, grad_norm });
    }
    Err(Error::solver(what, grad_norm))
}
