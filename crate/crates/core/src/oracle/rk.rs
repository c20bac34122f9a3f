//! Embedded Dormand-Prince 5(4) integrator with adaptive step control.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveRk<T> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: usize,
}

impl<T: Real> Default for AdaptiveRk<T> {
    fn default() -> Self {
        Self { rtol: T::c(1e-10), atol: T::c(1e-16), max_steps: 2_000_000 }
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

impl<T: Real> AdaptiveRk<T> {
    /// Integrate `y' = f(x, y)` from `x0` to `x1` (either direction),
    /// advancing `y` in place.
    pub fn integrate_to<F>(&self, f: &mut F, x0: T, x1: T, y: &mut [T]) -> Result<()>
    where
        F: FnMut(T, &[T], &mut [T]) -> Result<()>,
    {
        if x0 == x1 {
            return Ok(());
        }
        let n = y.len();
        let span = x1 - x0;
        let dir = if span > T::zero() { T::one() } else { -T::one() };
        let mut h = span * T::c(1e-3);
        let h_floor = span.abs() * T::c(1e-14);
        let mut x = x0;
        let mut k = vec![vec![T::zero(); n]; 7];
        let mut y_stage = vec![T::zero(); n];
        let mut y_new = vec![T::zero(); n];
        let blowup = T::c(1e10);

        for _ in 0..self.max_steps {
            if (x1 - x) * dir <= T::zero() {
                return Ok(());
            }
            if (x1 - x - h) * dir < T::zero() {
                h = x1 - x;
            }
            f(x, y, &mut k[0])?;
            for s in 0..6 {
                for i in 0..n {
                    let mut acc = T::zero();
                    for (j, kj) in k.iter().enumerate().take(s + 1) {
                        let a = A[s][j];
                        if a != 0.0 {
                            acc = acc + T::c(a) * kj[i];
                        }
                    }
                    y_stage[i] = y[i] + h * acc;
                }
                let xs = x + h * T::c(C[s]);
                let (head, tail) = k.split_at_mut(s + 1);
                let _ = head;
                f(xs, &y_stage, &mut tail[0])?;
            }
            // 5th-order solution is the last stage evaluation point state.
            for i in 0..n {
                let mut acc = T::zero();
                for (j, kj) in k.iter().enumerate().take(6) {
                    let a = A[5][j];
                    if a != 0.0 {
                        acc = acc + T::c(a) * kj[i];
                    }
                }
                y_new[i] = y[i] + h * acc;
            }
            // Error estimate.
            let mut err = T::zero();
            for i in 0..n {
                let mut e = T::zero();
                for (j, kj) in k.iter().enumerate() {
                    if E[j] != 0.0 {
                        e = e + T::c(E[j]) * kj[i];
                    }
                }
                e = e * h;
                let scale = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                let q = e / scale;
                err = err + q * q;
            }
            err = (err / T::from_usize(n).unwrap()).sqrt();

            if err <= T::one() {
                x = x + h;
                y.copy_from_slice(&y_new);
                for (i, v) in y.iter().enumerate() {
                    if !v.is_finite() || v.abs() > blowup {
                        return Err(Error::BlowUp { x: x.as_f64(), component: i });
                    }
                }
            }
            let factor = if err > T::zero() {
                T::c(0.9) * err.powf(-T::c(0.2))
            } else {
                T::c(5.0)
            };
            h = h * factor.max(T::c(0.2)).min(T::c(5.0));
            if h.abs() < h_floor {
                return Err(Error::StepUnderflow { x: x.as_f64() });
            }
        }
        Err(Error::StepUnderflow { x: x.as_f64() })
    }

    /// Integrate along a monotone sequence of output points, returning the
    /// state at each (the first entry is the initial state itself).
    pub fn integrate_path<F>(&self, f: &mut F, xs: &[T], y0: &[T]) -> Result<Vec<Vec<T>>>
    where
        F: FnMut(T, &[T], &mut [T]) -> Result<()>,
    {
        let mut y = y0.to_vec();
        let mut out = Vec::with_capacity(xs.len());
        out.push(y.clone());
        for w in xs.windows(2) {
            self.integrate_to(f, w[0], w[1], &mut y)?;
            out.push(y.clone());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_forward() {
        let rk = AdaptiveRk::<f64> { rtol: 1e-10, atol: 1e-12, max_steps: 100_000 };
        let mut y = [1.0];
        rk.integrate_to(&mut |_x, y, dy| {
            dy[0] = -y[0];
            Ok(())
        }, 0.0, 2.0, &mut y)
        .unwrap();
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn backward_direction() {
        let rk = AdaptiveRk::<f64>::default();
        let mut y = [1.0f64.exp()];
        rk.integrate_to(&mut |_x, y, dy| {
            dy[0] = y[0];
            Ok(())
        }, 1.0, 0.0, &mut y)
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tolerance_controls_error() {
        let run = |tol: f64| -> f64 {
            let rk = AdaptiveRk::<f64> { rtol: tol, atol: tol * 1e-2, max_steps: 1_000_000 };
            let mut y = [0.0, 1.0];
            rk.integrate_to(&mut |_x, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            }, 0.0, std::f64::consts::PI, &mut y)
            .unwrap();
            (y[0] - 0.0).abs() + (y[1] + 1.0).abs()
        };
        let coarse = run(1e-6);
        let fine = run(1e-10);
        assert!(fine < coarse);
        assert!(fine < 1e-8);
    }

    #[test]
    fn path_outputs() {
        let rk = AdaptiveRk::<f64>::default();
        let xs = [0.0, 0.5, 1.0];
        let out = rk
            .integrate_path(&mut |_x, y, dy| {
                dy[0] = y[0];
                Ok(())
            }, &xs, &[1.0])
            .unwrap();
        assert_eq!(out.len(), 3);
        assert!((out[1][0] - 0.5f64.exp()).abs() < 1e-9);
        assert!((out[2][0] - 1.0f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn blowup_detected() {
        let rk = AdaptiveRk::<f64> { rtol: 1e-6, atol: 1e-8, max_steps: 1_000_000 };
        let mut y = [1.0];
        let r = rk.integrate_to(&mut |_x, y, dy| {
            dy[0] = y[0] * y[0];
            Ok(())
        }, 0.0, 3.0, &mut y);
        assert!(matches!(r, Err(Error::BlowUp { .. }) | Err(Error::StepUnderflow { .. })));
    }
}
