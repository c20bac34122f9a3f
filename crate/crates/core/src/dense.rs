//! Tiny dense linear solves (matching systems, shooting Jacobians).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Solve `a x = b` in place for a small row-major `n x n` system with
/// partial pivoting; `b` becomes the solution. Returns a conditioning proxy
/// (max/min pivot magnitude).
pub(crate) fn solve_dense<T: Real>(a: &mut [T], b: &mut [T], n: usize) -> Result<T> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut min_p = T::infinity();
    let mut max_p = T::zero();
    for k in 0..n {
        let mut ipiv = k;
        let mut pmax = a[k * n + k].abs();
        for i in (k + 1)..n {
            if a[i * n + k].abs() > pmax {
                pmax = a[i * n + k].abs();
                ipiv = i;
            }
        }
        if pmax == T::zero() {
            return Err(Error::SingularMatching {
                cond_estimate: if min_p.is_finite() { (max_p / min_p).as_f64() } else { f64::INFINITY },
            });
        }
        if ipiv != k {
            for j in 0..n {
                a.swap(k * n + j, ipiv * n + j);
            }
            b.swap(k, ipiv);
        }
        let pivot = a[k * n + k];
        min_p = min_p.min(pivot.abs());
        max_p = max_p.max(pivot.abs());
        for i in (k + 1)..n {
            let m = a[i * n + k] / pivot;
            if m != T::zero() {
                for j in k..n {
                    a[i * n + j] = a[i * n + j] - m * a[k * n + j];
                }
                b[i] = b[i] - m * b[k];
            }
        }
    }
    for i in (0..n).rev() {
        let mut x = b[i];
        for j in (i + 1)..n {
            x = x - a[i * n + j] * b[j];
        }
        b[i] = x / a[i * n + i];
    }
    Ok(max_p / min_p)
}
