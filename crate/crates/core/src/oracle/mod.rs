//! Independent verification path: adaptive-step shooting integration of the
//! nonlinear systems with damped-Newton root finding on the spectral and
//! auxiliary unknowns. Shares the model right-hand sides with the main
//! solver but nothing else; discretization and root finding are fully
//! independent of the collocation path.

pub mod rk;

pub use rk::AdaptiveRk;

use crate::canm::FarField;
use crate::dense::solve_dense;
use crate::error::{Error, Result};
use crate::layout::{Layout, L_ETA, L_LAMBDA, L_NU, L_PHI, L_SIGMA, L_XI};
use crate::model::{ModelParams, SpectralTriple};
use crate::scalar::Real;
use crate::solution::Solution;

/// Shooting trial: the spectral triple plus the auxiliary unknowns that
/// turn both domains into initial value problems.
///
/// The far field is seeded with nu, phi, sigma fixed by the truncation data
/// (zero for phi and sigma, the far-field closure for nu) while the
/// derivative components xi and eta at X_inf carry free amplitudes — the
/// decaying modes the inward integration picks up. The amplitudes are
/// envelope-scaled so the Newton steps stay well conditioned.
#[derive(Debug, Clone, Copy)]
pub struct ShootTrial<T> {
    pub triple: SpectralTriple<T>,
    /// Central metric potential nu(0).
    pub nu_c: T,
    /// Central dilaton value phi(0).
    pub phi_c: T,
    /// Boson-tail slope amplitude (mixed variant only).
    pub amp_sigma: T,
    /// Dilaton-tail slope amplitude.
    pub amp_phi: T,
    /// Metric function lambda at the truncation boundary.
    pub lambda_inf: T,
}

/// Terminal states and continuity mismatches of one shot.
#[derive(Debug, Clone)]
pub struct ShootResult<T> {
    /// Interior terminal state y_i(1).
    pub inner_terminal: Vec<T>,
    /// Exterior terminal state y_e(1).
    pub outer_terminal: Vec<T>,
    /// The (nu, xi, eta) continuity mismatches at x = 1 (2 components in
    /// pure-fermion mode).
    pub mismatch: Vec<T>,
    /// Full residual vector of the shooting system (inner-side conditions,
    /// interface data conditions, then the mismatches).
    pub residual: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig<T> {
    pub x_inf: T,
    pub far_field: FarField,
    pub integrator: AdaptiveRk<T>,
    pub newton_tol: T,
    pub max_newton: usize,
}

impl<T: Real> OracleConfig<T> {
    pub fn new(x_inf: T, far_field: FarField) -> Self {
        Self {
            x_inf,
            far_field,
            integrator: AdaptiveRk::default(),
            newton_tol: T::c(1e-10),
            max_newton: 60,
        }
    }
}

impl<T: Real> ShootTrial<T> {
    /// Seed a trial from a converged solution: central values, truncation
    /// data, and the xi/eta slopes read directly at the outer boundary.
    pub fn from_solution(sol: &Solution<T>) -> Self {
        let r_s = sol.spectral.r_s;
        let outer = &sol.outer;
        let last = outer.n_nodes() - 1;
        let x_inf = outer.mesh().b();
        let gamma = sol.params.gamma;
        let amp_phi = outer.value(last, L_XI) / envelope(gamma, r_s, x_inf);
        let amp_sigma = match sol.spectral.omega {
            Some(om) if om < T::one() => {
                let k = (T::one() - om * om).sqrt();
                outer.value(last, L_ETA) / envelope(k, r_s, x_inf)
            }
            _ => T::zero(),
        };
        Self {
            triple: sol.spectral,
            nu_c: sol.inner.value(0, L_NU),
            phi_c: sol.inner.value(0, L_PHI),
            amp_sigma,
            amp_phi,
            lambda_inf: outer.value(last, L_LAMBDA),
        }
    }

    fn pack(&self) -> Vec<T> {
        match self.triple.omega {
            Some(om) => vec![
                self.triple.r_s,
                om,
                self.triple.phi_s,
                self.nu_c,
                self.phi_c,
                self.amp_sigma,
                self.amp_phi,
                self.lambda_inf,
            ],
            None => vec![
                self.triple.r_s,
                self.triple.phi_s,
                self.nu_c,
                self.phi_c,
                self.amp_phi,
                self.lambda_inf,
            ],
        }
    }

    fn unpack(mixed: bool, u: &[T]) -> Self {
        if mixed {
            Self {
                triple: SpectralTriple::mixed(u[0], u[1], u[2]),
                nu_c: u[3],
                phi_c: u[4],
                amp_sigma: u[5],
                amp_phi: u[6],
                lambda_inf: u[7],
            }
        } else {
            Self {
                triple: SpectralTriple::pure_fermion(u[0], u[1]),
                nu_c: u[2],
                phi_c: u[3],
                amp_sigma: T::zero(),
                amp_phi: u[4],
                lambda_inf: u[5],
            }
        }
    }
}

/// Decay envelope exp(-k R_s (x - 1)) / x of a massive tail in the scaled
/// coordinate (the 1/x factor carries the massless limit).
fn envelope<T: Real>(k: T, r_s: T, x: T) -> T {
    (-k * r_s * (x - T::one())).exp() / x
}

/// Integrate both domains for a trial and report the continuity mismatches.
pub fn shoot<T: Real>(
    params: &ModelParams<T>,
    trial: &ShootTrial<T>,
    cfg: &OracleConfig<T>,
) -> Result<ShootResult<T>> {
    let lay = Layout::for_mixed(trial.triple.omega.is_some());
    let r_s = trial.triple.r_s;
    if !(r_s > T::zero()) {
        return Err(Error::InvalidParams(format!("trial radius {r_s} not positive")));
    }
    let om = trial.triple.omega_or_zero();
    if trial.triple.omega.is_some() && !(om > T::zero() && om < T::one()) {
        return Err(Error::Domain(format!(
            "trial Omega = {om} outside (0, 1): boson tail decay rate is imaginary"
        )));
    }

    // Interior: x = 0 -> 1.
    let mut y_i = vec![T::zero(); lay.n_inner];
    y_i[L_NU] = trial.nu_c;
    y_i[L_PHI] = trial.phi_c;
    if lay.mixed {
        y_i[L_SIGMA] = params.sigma_c;
    }
    y_i[lay.mu_inner] = params.mu_c;
    let mut f_i = |x: T, y: &[T], dy: &mut [T]| -> Result<()> {
        lay.rhs_inner(x, y, r_s, om, params, dy)?;
        for v in dy.iter_mut() {
            *v = r_s * *v;
        }
        Ok(())
    };
    cfg.integrator.integrate_to(&mut f_i, T::zero(), T::one(), &mut y_i)?;

    // Exterior: seeded at X_inf on the decaying modes, integrated inward.
    let mut y_e = seed_outer(params, trial, cfg, lay)?;
    let mut f_e = |x: T, y: &[T], dy: &mut [T]| -> Result<()> {
        lay.rhs_outer(x, y, r_s, om, params, dy)?;
        for v in dy.iter_mut() {
            *v = r_s * *v;
        }
        Ok(())
    };
    cfg.integrator.integrate_to(&mut f_e, cfg.x_inf, T::one(), &mut y_e)?;

    let match_list: &[usize] = if lay.mixed { &[L_NU, L_XI, L_ETA] } else { &[L_NU, L_XI] };
    let mut mismatch = Vec::with_capacity(match_list.len());
    for &c in match_list {
        mismatch.push(y_e[c] - y_i[c]);
    }
    let mut residual = vec![
        y_i[lay.mu_inner],
        y_i[L_PHI] - trial.triple.phi_s,
        y_e[L_LAMBDA] - y_i[L_LAMBDA],
    ];
    if lay.mixed {
        residual.push(y_e[L_SIGMA] - y_i[L_SIGMA]);
    }
    residual.push(y_e[L_PHI] - trial.triple.phi_s);
    residual.extend_from_slice(&mismatch);

    Ok(ShootResult { inner_terminal: y_i, outer_terminal: y_e, mismatch, residual })
}

fn seed_outer<T: Real>(
    params: &ModelParams<T>,
    trial: &ShootTrial<T>,
    cfg: &OracleConfig<T>,
    lay: &Layout,
) -> Result<Vec<T>> {
    let r_s = trial.triple.r_s;
    let om = trial.triple.omega_or_zero();
    let x = cfg.x_inf;
    let mut y = vec![T::zero(); lay.n_outer];
    y[L_LAMBDA] = trial.lambda_inf;
    // phi and sigma carry the truncation data (zero); their slopes are the
    // free decaying-mode amplitudes.
    y[L_PHI] = T::zero();
    y[L_XI] = trial.amp_phi * envelope(params.gamma, r_s, x);
    if lay.mixed {
        let k = (T::one() - om * om).sqrt();
        y[L_SIGMA] = T::zero();
        y[L_ETA] = trial.amp_sigma * envelope(k, r_s, x);
    }
    y[L_NU] = T::zero();
    if cfg.far_field == FarField::Robin {
        // nu(X_inf) from the vacuum-tail relation nu = -ln(1 + x dnu/dx);
        // dnu/dx barely depends on nu here, two sweeps converge it.
        for _ in 0..2 {
            let mut f = vec![T::zero(); lay.n_outer];
            lay.rhs_outer(x, &y, r_s, om, params, &mut f)?;
            let slope = r_s * f[L_NU];
            let arg = (T::one() + x * slope).max(T::c(1e-6));
            y[L_NU] = -arg.ln();
        }
    }
    Ok(y)
}

/// Damped-Newton root finding on the full shooting residual; the Jacobian
/// is built by forward differences.
pub fn shoot_solve<T: Real>(
    params: &ModelParams<T>,
    initial: &ShootTrial<T>,
    cfg: &OracleConfig<T>,
) -> Result<(ShootTrial<T>, ShootResult<T>)> {
    let mixed = initial.triple.omega.is_some();
    let mut u = initial.pack();
    let n = u.len();
    let clamp = |u: &mut Vec<T>| {
        u[0] = u[0].max(T::c(0.05)); // radius
        if mixed {
            u[1] = u[1].max(T::c(1e-3)).min(T::c(0.9999)); // Omega
        }
    };
    clamp(&mut u);
    let mut shot = shoot(params, &ShootTrial::unpack(mixed, &u), cfg)?;
    let mut res_norm = inf_norm(&shot.residual);

    for _ in 0..cfg.max_newton {
        if res_norm < cfg.newton_tol {
            return Ok((ShootTrial::unpack(mixed, &u), shot));
        }
        // Forward-difference Jacobian, column per unknown.
        let mut jac = vec![T::zero(); n * n];
        for j in 0..n {
            let h = T::c(1e-7) * u[j].abs().max(T::c(1e-4));
            let mut up = u.clone();
            up[j] = up[j] + h;
            let shot_p = shoot(params, &ShootTrial::unpack(mixed, &up), cfg)?;
            for i in 0..n {
                jac[i * n + j] = (shot_p.residual[i] - shot.residual[i]) / h;
            }
        }
        let mut step = shot.residual.clone();
        for v in step.iter_mut() {
            *v = -*v;
        }
        solve_dense(&mut jac, &mut step, n)?;

        // Backtracking on the residual norm.
        let mut tau = T::one();
        let mut accepted = false;
        for _ in 0..25 {
            let mut u_try = u.clone();
            for i in 0..n {
                u_try[i] = u_try[i] + tau * step[i];
            }
            clamp(&mut u_try);
            match shoot(params, &ShootTrial::unpack(mixed, &u_try), cfg) {
                Ok(s) => {
                    let norm = inf_norm(&s.residual);
                    if norm < res_norm * (T::one() - T::c(1e-4) * tau) || norm < cfg.newton_tol {
                        u = u_try;
                        shot = s;
                        res_norm = norm;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::BlowUp { .. }) | Err(Error::StepUnderflow { .. }) | Err(Error::Domain(_)) => {}
                Err(e) => return Err(e),
            }
            tau = tau * T::c(0.5);
        }
        if !accepted {
            return Err(Error::RootFinding(format!(
                "shooting Newton stalled at residual {res_norm:e}"
            )));
        }
    }
    if res_norm < cfg.newton_tol {
        Ok((ShootTrial::unpack(mixed, &u), shot))
    } else {
        Err(Error::RootFinding(format!(
            "shooting Newton did not reach tolerance (residual {res_norm:e})"
        )))
    }
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Integrate a converged trial once more, sampling the profiles at the
/// given interior and exterior points (ascending; exterior sampling is done
/// on the inward pass and returned in ascending order).
pub fn sample_profiles<T: Real>(
    params: &ModelParams<T>,
    trial: &ShootTrial<T>,
    cfg: &OracleConfig<T>,
    xs_inner: &[T],
    xs_outer: &[T],
) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> {
    let lay = Layout::for_mixed(trial.triple.omega.is_some());
    let r_s = trial.triple.r_s;
    let om = trial.triple.omega_or_zero();

    let mut y0 = vec![T::zero(); lay.n_inner];
    y0[L_NU] = trial.nu_c;
    y0[L_PHI] = trial.phi_c;
    if lay.mixed {
        y0[L_SIGMA] = params.sigma_c;
    }
    y0[lay.mu_inner] = params.mu_c;
    let mut f_i = |x: T, y: &[T], dy: &mut [T]| -> Result<()> {
        lay.rhs_inner(x, y, r_s, om, params, dy)?;
        for v in dy.iter_mut() {
            *v = r_s * *v;
        }
        Ok(())
    };
    let inner = cfg.integrator.integrate_path(&mut f_i, xs_inner, &y0)?;

    let ye0 = seed_outer(params, trial, cfg, lay)?;
    let mut f_e = |x: T, y: &[T], dy: &mut [T]| -> Result<()> {
        lay.rhs_outer(x, y, r_s, om, params, dy)?;
        for v in dy.iter_mut() {
            *v = r_s * *v;
        }
        Ok(())
    };
    let mut xs_down: Vec<T> = xs_outer.to_vec();
    xs_down.reverse();
    let mut outer = cfg.integrator.integrate_path(&mut f_e, &xs_down, &ye0)?;
    outer.reverse();
    Ok((inner, outer))
}
