//! The concrete scalar-tensor star model: coupling function, dilaton and
//! boson potentials, neutron-gas equation of state, dimensionless stress
//! components, and the interior/exterior right-hand sides with their
//! derivatives.
//!
//! State layout. The interior unknown vector is
//! `y = (lambda, nu, phi, xi, sigma, eta, mu)` where `xi = dphi/dr` and
//! `eta = dsigma/dr`; the exterior vector drops `mu`. All functions here are
//! pointwise and pure: they take a radius `r = R_s * x` (through `x` and
//! `R_s`) and a state slice, and return the right-hand side in r-units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Number of interior components.
pub const DIM_INNER: usize = 7;
/// Number of exterior components.
pub const DIM_OUTER: usize = 6;

/// Component indices into the interior/exterior state vectors.
pub mod comp {
    pub const LAMBDA: usize = 0;
    pub const NU: usize = 1;
    pub const PHI: usize = 2;
    pub const XI: usize = 3;
    pub const SIGMA: usize = 4;
    pub const ETA: usize = 5;
    pub const MU: usize = 6;
}

/// Fermi momentum below which the EOS switches to series evaluation.
pub const MU_SERIES_THRESHOLD: f64 = 1e-4;

/// Physical parameters of a star configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    /// Dilaton-to-boson mass ratio gamma = m_D / m_B.
    pub gamma: T,
    /// Dimensionless boson self-coupling.
    pub lambda_self: T,
    /// Fermion-scale parameter b (Compton-length to stellar-radius ratio).
    pub b: T,
    /// Central boson field amplitude sigma_c.
    pub sigma_c: T,
    /// Central dimensionless Fermi momentum mu_c.
    pub mu_c: T,
}

impl<T: Real> ModelParams<T> {
    pub fn new(gamma: T, lambda_self: T, b: T, sigma_c: T, mu_c: T) -> Result<Self> {
        let p = Self { gamma, lambda_self, b, sigma_c, mu_c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= T::zero()) {
            return Err(Error::InvalidParams("gamma must be >= 0".into()));
        }
        if !(self.lambda_self >= T::zero()) {
            return Err(Error::InvalidParams("lambda-self must be >= 0".into()));
        }
        if !(self.b > T::zero()) {
            return Err(Error::InvalidParams("b must be > 0".into()));
        }
        if !(self.sigma_c >= T::zero()) {
            return Err(Error::InvalidParams("sigma-c must be >= 0".into()));
        }
        if !(self.mu_c > T::zero()) {
            return Err(Error::InvalidParams(
                "mu-c must be > 0 (pure-boson configurations are out of scope)".into(),
            ));
        }
        Ok(())
    }
}

/// The three scalar unknowns adjusted by the matching system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralTriple<T> {
    /// Dimensionless star radius (fermionic surface), > 0.
    pub r_s: T,
    /// Dimensionless boson frequency Omega = omega / m_B; absent for
    /// pure-fermion configurations.
    pub omega: Option<T>,
    /// Interface dilaton value phi_s = phi(1).
    pub phi_s: T,
}

impl<T: Real> SpectralTriple<T> {
    pub fn mixed(r_s: T, omega: T, phi_s: T) -> Self {
        Self { r_s, omega: Some(omega), phi_s }
    }

    pub fn pure_fermion(r_s: T, phi_s: T) -> Self {
        Self { r_s, omega: None, phi_s }
    }

    /// Omega value used in shared stress/RHS code; zero when absent
    /// (every occurrence multiplies sigma^2, which is identically zero then).
    #[inline]
    pub fn omega_or_zero(&self) -> T {
        self.omega.unwrap_or_else(T::zero)
    }

    /// True when the decay rate sqrt(1 - Omega^2) of the boson tail is real.
    pub fn omega_in_range(&self) -> bool {
        match self.omega {
            Some(om) => om > T::zero() && om < T::one(),
            None => true,
        }
    }
}

/// Dimensionless energy-momentum components of both matter species.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StressBundle<T> {
    pub t00_f: T,
    pub t11_f: T,
    pub t00_b: T,
    pub t11_b: T,
    pub trace_f: T,
    pub trace_b: T,
}

/// Coupling factor A(phi) = exp(phi/sqrt(3)) and its logarithmic derivative
/// alpha = d ln A / dphi = 1/sqrt(3) (constant for this model).
#[inline]
pub fn coupling<T: Real>(phi: T) -> (T, T) {
    let alpha = T::one() / T::c(3.0).sqrt();
    ((phi * alpha).exp(), alpha)
}

/// Dilaton potential V(phi) = (3/2)(1 - A^2)^2 and its derivative
/// dV/dphi = -2 sqrt(3) A^2 (1 - A^2).
#[inline]
pub fn dilaton_potential<T: Real>(phi: T) -> (T, T) {
    let (a, _) = coupling(phi);
    let a2 = a * a;
    let one_m = T::one() - a2;
    let v = T::c(1.5) * one_m * one_m;
    let vp = -T::c(2.0) * T::c(3.0).sqrt() * a2 * one_m;
    (v, vp)
}

/// Second derivative of the dilaton potential, d2V/dphi2 = 4 A^2 (2 A^2 - 1).
#[inline]
pub fn dilaton_potential_second<T: Real>(phi: T) -> T {
    let (a, _) = coupling(phi);
    let a2 = a * a;
    T::c(4.0) * a2 * (T::c(2.0) * a2 - T::one())
}

/// Boson potential W(s) = -1/2 (s + Lambda s^2 / 2) over s = sigma^2,
/// together with dW/ds = -1/2 (1 + Lambda s).
#[inline]
pub fn boson_potential<T: Real>(s: T, lambda_self: T) -> (T, T) {
    let half = T::c(0.5);
    let w = -half * (s + half * lambda_self * s * s);
    let wp = -half * (T::one() + lambda_self * s);
    (w, wp)
}

/// Second derivative dW2/ds2 = -Lambda/2.
#[inline]
pub fn boson_potential_second<T: Real>(lambda_self: T) -> T {
    -T::c(0.5) * lambda_self
}

/// Equation of state of the ideal neutron gas in parametric form.
///
/// Returns (f, g, f', n): dimensionless pressure, energy density, pressure
/// derivative and fermion density at Fermi momentum `mu`. Below
/// [`MU_SERIES_THRESHOLD`] the pressure and energy switch to series
/// evaluation; the direct closed forms cancel catastrophically there.
pub fn eos<T: Real>(mu: T) -> Result<(T, T, T, T)> {
    if mu < T::zero() {
        return Err(Error::Domain(format!("eos: negative Fermi momentum {mu}")));
    }
    Ok(eos_clamped(mu))
}

/// EOS evaluation with mu clamped to zero from below; used by the RHS
/// functions where trial iterates may dip infinitesimally past the surface.
#[inline]
pub(crate) fn eos_clamped<T: Real>(mu: T) -> (T, T, T, T) {
    let mu = mu.max(T::zero());
    let sq_mu = mu.sqrt();
    let n = mu * sq_mu; // mu^{3/2}
    let fp = n / (T::c(2.0) * (T::one() + mu).sqrt());
    if mu < T::c(MU_SERIES_THRESHOLD) {
        // f = mu^{5/2} (1/5 - mu/14 + mu^2/24 - 5 mu^3/176 + ...)
        // g = mu^{3/2} (1 + 3mu/10 - 3mu^2/56 + mu^3/48 - 15 mu^4/1408 + ...)
        let f = n * mu
            * (T::c(0.2) - mu * (T::c(1.0 / 14.0) - mu * (T::c(1.0 / 24.0) - mu * T::c(5.0 / 176.0))));
        let g = n
            * (T::one()
                + mu * (T::c(0.3) - mu * (T::c(3.0 / 56.0) - mu * (T::c(1.0 / 48.0) - mu * T::c(15.0 / 1408.0)))));
        (f, g, fp, n)
    } else {
        let root = (mu + mu * mu).sqrt();
        let ln_term = (sq_mu + (T::one() + mu).sqrt()).ln();
        let eighth = T::c(0.125);
        let three = T::c(3.0);
        let f = eighth * ((T::c(2.0) * mu - three) * root + three * ln_term);
        let g = eighth * ((T::c(6.0) * mu + three) * root - three * ln_term);
        (f, g, fp, n)
    }
}

/// Derivative dg/dmu = (3/2) sqrt(mu + mu^2); stable for all mu >= 0.
#[inline]
pub(crate) fn eos_g_prime<T: Real>(mu: T) -> T {
    let mu = mu.max(T::zero());
    T::c(1.5) * (mu + mu * mu).sqrt()
}

/// The source ratio (g + f)/f' appearing in the Fermi-momentum equation.
///
/// The apparent 0/0 at the star surface is removable: below the series
/// threshold the limit form 2(1 + mu) is used (the logarithmic terms of
/// g + f cancel identically, so this is in fact the exact value).
#[inline]
pub fn eos_source_ratio<T: Real>(mu: T) -> T {
    let mu = mu.max(T::zero());
    if mu < T::c(MU_SERIES_THRESHOLD) {
        T::c(2.0) * (T::one() + mu)
    } else {
        let (f, g, fp, _) = eos_clamped(mu);
        (g + f) / fp
    }
}

/// d/dmu of the source ratio; equals 2 identically.
#[inline]
pub(crate) fn eos_source_ratio_prime<T: Real>() -> T {
    T::c(2.0)
}

/// Stress components of both species at a point.
///
/// `mu` is `None` in the exterior (no fermionic matter); all fermion
/// components vanish there exactly.
pub fn stress<T: Real>(
    phi: T,
    xi: T,
    sigma: T,
    eta: T,
    nu: T,
    lambda: T,
    mu: Option<T>,
    omega: T,
    params: &ModelParams<T>,
) -> StressBundle<T> {
    let _ = xi; // the dilaton gradient enters the field equations directly
    let half = T::c(0.5);
    let (a, _) = coupling(phi);
    let a2 = a * a;
    let a4 = a2 * a2;
    let (w, _) = boson_potential(sigma * sigma, params.lambda_self);
    let em_nu = (-nu).exp();
    let em_lambda = (-lambda).exp();
    let kinetic_t = omega * omega * sigma * sigma * em_nu;
    let kinetic_r = eta * eta * em_lambda;

    let t00_b = half * a2 * (kinetic_t + kinetic_r) - a4 * w;
    let t11_b = -half * a2 * (kinetic_t + kinetic_r) - a4 * w;
    let trace_b = -a2 * (kinetic_t - kinetic_r) - T::c(4.0) * a4 * w;

    let (t00_f, t11_f, trace_f) = match mu {
        Some(m) => {
            let (f, g, _, _) = eos_clamped(m);
            (
                params.b * a4 * g,
                -params.b * a4 * f,
                params.b * a4 * (g - T::c(3.0) * f),
            )
        }
        None => (T::zero(), T::zero(), T::zero()),
    };

    StressBundle { t00_f, t11_f, t00_b, t11_b, trace_f, trace_b }
}

/// Everything the RHS and Jacobian evaluations share at one point.
struct PointCtx<T> {
    a2: T,
    a4: T,
    alpha: T,
    v: T,
    vp: T,
    vpp: T,
    w: T,
    wp: T,
    wpp: T,
    em_nu: T,
    em_lambda: T,
    e_lambda: T,
    /// P = (1/2) A^2 [Omega^2 sigma^2 e^-nu + eta^2 e^-lambda]
    p_sum: T,
    /// D = A^2 [Omega^2 sigma^2 e^-nu - eta^2 e^-lambda]
    d_diff: T,
    f: T,
    g: T,
    fp: T,
    gp: T,
    ratio: T,
}

impl<T: Real> PointCtx<T> {
    fn new(y: &[T], mu: Option<T>, omega: T, params: &ModelParams<T>) -> Self {
        let phi = y[comp::PHI];
        let sigma = y[comp::SIGMA];
        let eta = y[comp::ETA];
        let (a, alpha) = coupling(phi);
        let a2 = a * a;
        let a4 = a2 * a2;
        let (v, vp) = dilaton_potential(phi);
        let vpp = dilaton_potential_second(phi);
        let (w, wp) = boson_potential(sigma * sigma, params.lambda_self);
        let wpp = boson_potential_second(params.lambda_self);
        let em_nu = (-y[comp::NU]).exp();
        let em_lambda = (-y[comp::LAMBDA]).exp();
        let e_lambda = y[comp::LAMBDA].exp();
        let kt = omega * omega * sigma * sigma * em_nu;
        let kr = eta * eta * em_lambda;
        let (f, g, fp, _n) = match mu {
            Some(m) => eos_clamped(m),
            None => (T::zero(), T::zero(), T::zero(), T::zero()),
        };
        let gp = match mu {
            Some(m) => eos_g_prime(m),
            None => T::zero(),
        };
        let ratio = match mu {
            Some(m) => eos_source_ratio(m),
            None => T::zero(),
        };
        Self {
            a2,
            a4,
            alpha,
            v,
            vp,
            vpp,
            w,
            wp,
            wpp,
            em_nu,
            em_lambda,
            e_lambda,
            p_sum: T::c(0.5) * a2 * (kt + kr),
            d_diff: a2 * (kt - kr),
            f,
            g,
            fp,
            gp,
            ratio,
        }
    }

    #[inline]
    fn t00_b(&self) -> T {
        self.p_sum - self.a4 * self.w
    }

    #[inline]
    fn t11_b(&self) -> T {
        -self.p_sum - self.a4 * self.w
    }

    #[inline]
    fn trace_b(&self) -> T {
        -self.d_diff - T::c(4.0) * self.a4 * self.w
    }
}

/// Interior right-hand side F_i at the point (r = R_s x, y); seven
/// components, in r-units (the x-scaled system multiplies by R_s).
///
/// At `x = 0` the regularized limits of a regular center are returned:
/// the metric and Fermi rows vanish, and the second-order rows acquire the
/// 1/3 factor from the removable (2/r) u' term.
pub fn rhs_inner<T: Real>(
    x: T,
    y: &[T; DIM_INNER],
    r_s: T,
    omega: T,
    params: &ModelParams<T>,
) -> Result<[T; DIM_INNER]> {
    let out = rhs_raw(x, y, r_s, omega, params, true);
    check_finite(&out, x * r_s)?;
    Ok(out)
}

/// Exterior right-hand side F_e; six components, fermion terms absent.
pub fn rhs_outer<T: Real>(
    x: T,
    y: &[T; DIM_OUTER],
    r_s: T,
    omega: T,
    params: &ModelParams<T>,
) -> Result<[T; DIM_OUTER]> {
    let mut y7 = [T::zero(); DIM_INNER];
    y7[..DIM_OUTER].copy_from_slice(y);
    let full = rhs_raw(x, &y7, r_s, omega, params, false);
    let mut out = [T::zero(); DIM_OUTER];
    out.copy_from_slice(&full[..DIM_OUTER]);
    check_finite(&out, x * r_s)?;
    Ok(out)
}

fn check_finite<T: Real>(v: &[T], r: T) -> Result<()> {
    for (i, val) in v.iter().enumerate() {
        if !val.is_finite() {
            return Err(Error::Eval { component: i, location: r.as_f64() });
        }
    }
    Ok(())
}

fn rhs_raw<T: Real>(
    x: T,
    y: &[T; DIM_INNER],
    r_s: T,
    omega: T,
    params: &ModelParams<T>,
    with_fermions: bool,
) -> [T; DIM_INNER] {
    let half = T::c(0.5);
    let mu = if with_fermions { Some(y[comp::MU]) } else { None };
    let ctx = PointCtx::new(y, mu, omega, params);
    let xi = y[comp::XI];
    let eta = y[comp::ETA];
    let sigma = y[comp::SIGMA];
    let gam2 = params.gamma * params.gamma;
    let t00 = ctx.t00_b() + if with_fermions { params.b * ctx.a4 * ctx.g } else { T::zero() };
    let t11 = ctx.t11_b() - if with_fermions { params.b * ctx.a4 * ctx.f } else { T::zero() };
    let trace = ctx.trace_b()
        + if with_fermions {
            params.b * ctx.a4 * (ctx.g - T::c(3.0) * ctx.f)
        } else {
            T::zero()
        };
    let src3 = half * ctx.e_lambda * (ctx.alpha * trace + half * gam2 * ctx.vp);
    let src4 = sigma * ctx.e_lambda * (omega * omega * ctx.em_nu + T::c(2.0) * ctx.a2 * ctx.wp);

    if x == T::zero() {
        // Regular center: F1 = F2 = F5 = 0, second-order rows get 1/3.
        let third = T::c(1.0 / 3.0);
        let f3 = third * src3;
        let f4 = -third * src4;
        let f5 = if with_fermions { -ctx.ratio * ctx.alpha * xi } else { T::zero() };
        return [T::zero(), T::zero(), xi, f3, eta, f4, f5];
    }

    let r = r_s * x;
    let curv = (T::one() - ctx.e_lambda) / r;
    let f1 = curv + r * (ctx.e_lambda * (t00 + half * gam2 * ctx.v) + xi * xi);
    let f2 = -curv - r * (ctx.e_lambda * (t11 + half * gam2 * ctx.v) - xi * xi);
    let dampen = half * (f1 - f2);
    let two_over_r = T::c(2.0) / r;
    let f3 = -two_over_r * xi + dampen * xi + src3;
    let f4 = -two_over_r * eta + (dampen - T::c(2.0) * ctx.alpha * xi) * eta - src4;
    let f5 = if with_fermions {
        -ctx.ratio * (half * f2 + ctx.alpha * xi)
    } else {
        T::zero()
    };
    [f1, f2, xi, f3, eta, f4, f5]
}

/// Interior Jacobians: Q = dF/dy (unscaled; the collocation caller forms
/// R_s Q), dF/dR_s through the explicit r = R_s x dependence (equals
/// x dF/dr at fixed y), and the analytic dF/dOmega.
pub fn jacobians_inner<T: Real>(
    x: T,
    y: &[T; DIM_INNER],
    r_s: T,
    omega: T,
    params: &ModelParams<T>,
) -> Result<(
    [[T; DIM_INNER]; DIM_INNER],
    [T; DIM_INNER],
    [T; DIM_INNER],
)> {
    let (q, d_rs, d_om) = jac_raw::<T, DIM_INNER>(x, y, r_s, omega, params, true);
    for row in &q {
        check_finite(row, x * r_s)?;
    }
    check_finite(&d_rs, x * r_s)?;
    check_finite(&d_om, x * r_s)?;
    Ok((q, d_rs, d_om))
}

/// Exterior Jacobians, restricted to six components.
pub fn jacobians_outer<T: Real>(
    x: T,
    y: &[T; DIM_OUTER],
    r_s: T,
    omega: T,
    params: &ModelParams<T>,
) -> Result<(
    [[T; DIM_OUTER]; DIM_OUTER],
    [T; DIM_OUTER],
    [T; DIM_OUTER],
)> {
    let mut y7 = [T::zero(); DIM_INNER];
    y7[..DIM_OUTER].copy_from_slice(y);
    let (q, d_rs, d_om) = jac_raw::<T, DIM_OUTER>(x, &y7, r_s, omega, params, false);
    for row in &q {
        check_finite(row, x * r_s)?;
    }
    Ok((q, d_rs, d_om))
}

/// Shared Jacobian evaluation. Returns `N x N` blocks of the full
/// derivative structure (N = 7 interior, N = 6 exterior).
fn jac_raw<T: Real, const N: usize>(
    x: T,
    y: &[T; DIM_INNER],
    r_s: T,
    omega: T,
    params: &ModelParams<T>,
    with_fermions: bool,
) -> ([[T; N]; N], [T; N], [T; N]) {
    use comp::*;
    let half = T::c(0.5);
    let two = T::c(2.0);
    let mu = if with_fermions { Some(y[MU]) } else { None };
    let ctx = PointCtx::new(y, mu, omega, params);
    let xi = y[XI];
    let eta = y[ETA];
    let sigma = y[SIGMA];
    let gam2 = params.gamma * params.gamma;
    let b = params.b;

    // Stress partials. dP/d., dD/d. with P and D as in PointCtx.
    let kt = omega * omega * sigma * sigma * ctx.em_nu;
    let kr = eta * eta * ctx.em_lambda;
    let mut d_p = [T::zero(); DIM_INNER];
    d_p[LAMBDA] = -half * ctx.a2 * kr;
    d_p[NU] = -half * ctx.a2 * kt;
    d_p[PHI] = two * ctx.alpha * ctx.p_sum;
    d_p[SIGMA] = ctx.a2 * omega * omega * sigma * ctx.em_nu;
    d_p[ETA] = ctx.a2 * eta * ctx.em_lambda;
    let dp_om = ctx.a2 * omega * sigma * sigma * ctx.em_nu;

    let mut d_d = [T::zero(); DIM_INNER];
    d_d[LAMBDA] = ctx.a2 * kr;
    d_d[NU] = -ctx.a2 * kt;
    d_d[PHI] = two * ctx.alpha * ctx.d_diff;
    d_d[SIGMA] = two * ctx.a2 * omega * omega * sigma * ctx.em_nu;
    d_d[ETA] = -two * ctx.a2 * eta * ctx.em_lambda;
    let dd_om = two * ctx.a2 * omega * sigma * sigma * ctx.em_nu;

    // A^4 W partials.
    let a4w = ctx.a4 * ctx.w;
    let da4w_phi = T::c(4.0) * ctx.alpha * a4w;
    let da4w_sigma = ctx.a4 * ctx.wp * two * sigma;

    // t00_b = P - A^4 W, t11_b = -P - A^4 W, trace_b = -D - 4 A^4 W.
    let mut d_t00b = [T::zero(); DIM_INNER];
    let mut d_t11b = [T::zero(); DIM_INNER];
    let mut d_trb = [T::zero(); DIM_INNER];
    for c in 0..DIM_INNER {
        d_t00b[c] = d_p[c];
        d_t11b[c] = -d_p[c];
        d_trb[c] = -d_d[c];
    }
    d_t00b[PHI] = d_t00b[PHI] - da4w_phi;
    d_t11b[PHI] = d_t11b[PHI] - da4w_phi;
    d_trb[PHI] = d_trb[PHI] - T::c(4.0) * da4w_phi;
    d_t00b[SIGMA] = d_t00b[SIGMA] - da4w_sigma;
    d_t11b[SIGMA] = d_t11b[SIGMA] - da4w_sigma;
    d_trb[SIGMA] = d_trb[SIGMA] - T::c(4.0) * da4w_sigma;
    let dt00b_om = dp_om;
    let dt11b_om = -dp_om;
    let dtrb_om = -dd_om;

    // Fermion stress partials (zero when exterior).
    let (t00f, t11f, trf) = if with_fermions {
        (b * ctx.a4 * ctx.g, -b * ctx.a4 * ctx.f, b * ctx.a4 * (ctx.g - T::c(3.0) * ctx.f))
    } else {
        (T::zero(), T::zero(), T::zero())
    };
    let mut d_t00f = [T::zero(); DIM_INNER];
    let mut d_t11f = [T::zero(); DIM_INNER];
    let mut d_trf = [T::zero(); DIM_INNER];
    if with_fermions {
        d_t00f[PHI] = T::c(4.0) * ctx.alpha * t00f;
        d_t11f[PHI] = T::c(4.0) * ctx.alpha * t11f;
        d_trf[PHI] = T::c(4.0) * ctx.alpha * trf;
        d_t00f[MU] = b * ctx.a4 * ctx.gp;
        d_t11f[MU] = -b * ctx.a4 * ctx.fp;
        d_trf[MU] = b * ctx.a4 * (ctx.gp - T::c(3.0) * ctx.fp);
    }

    let t00 = ctx.t00_b() + t00f;
    let t11 = ctx.t11_b() + t11f;
    let trace = ctx.trace_b() + trf;

    // src3 = (1/2) e^lambda [alpha * trace + (1/2) gamma^2 V'];
    // src4 = sigma e^lambda [Omega^2 e^-nu + 2 A^2 W'].
    let src3 = half * ctx.e_lambda * (ctx.alpha * trace + half * gam2 * ctx.vp);
    let mut d_src3 = [T::zero(); DIM_INNER];
    for c in 0..DIM_INNER {
        d_src3[c] = half * ctx.e_lambda * ctx.alpha * (d_trb[c] + d_trf[c]);
    }
    d_src3[LAMBDA] = d_src3[LAMBDA] + src3;
    d_src3[PHI] = d_src3[PHI] + half * ctx.e_lambda * half * gam2 * ctx.vpp;
    let dsrc3_om = half * ctx.e_lambda * ctx.alpha * dtrb_om;

    let bracket4 = omega * omega * ctx.em_nu + two * ctx.a2 * ctx.wp;
    let src4 = sigma * ctx.e_lambda * bracket4;
    let mut d_src4 = [T::zero(); DIM_INNER];
    d_src4[LAMBDA] = src4;
    d_src4[NU] = -sigma * ctx.e_lambda * omega * omega * ctx.em_nu;
    d_src4[PHI] = sigma * ctx.e_lambda * T::c(4.0) * ctx.alpha * ctx.a2 * ctx.wp;
    d_src4[SIGMA] =
        ctx.e_lambda * bracket4 + sigma * ctx.e_lambda * two * ctx.a2 * ctx.wpp * two * sigma;
    let dsrc4_om = sigma * ctx.e_lambda * two * omega * ctx.em_nu;

    let mut q = [[T::zero(); N]; N];
    let mut d_rs = [T::zero(); N];
    let mut d_om = [T::zero(); N];

    if x == T::zero() {
        // Regularized center rows. F1 = F2 = F5-bracket contributions vanish
        // identically; second-order rows carry the 1/3 limit factor.
        let third = T::c(1.0 / 3.0);
        q[PHI][XI] = T::one();
        q[SIGMA][ETA] = T::one();
        for c in 0..N {
            q[XI][c] = third * d_src3[c];
            q[ETA][c] = -third * d_src4[c];
        }
        d_om[XI] = third * dsrc3_om;
        d_om[ETA] = -third * dsrc4_om;
        if with_fermions && N == DIM_INNER {
            q[MU][XI] = -ctx.ratio * ctx.alpha;
            q[MU][MU] = -eos_source_ratio_prime::<T>() * ctx.alpha * xi;
        }
        // dF/dR_s = x dF/dr = 0 at x = 0.
        return (q, d_rs, d_om);
    }

    let r = r_s * x;
    let curv = (T::one() - ctx.e_lambda) / r;
    let g1 = ctx.e_lambda * (t00 + half * gam2 * ctx.v) + xi * xi;
    let g2 = ctx.e_lambda * (t11 + half * gam2 * ctx.v) - xi * xi;
    let f1 = curv + r * g1;
    let f2 = -curv - r * g2;

    // dF1/dc and dF2/dc.
    let mut d_f1 = [T::zero(); DIM_INNER];
    let mut d_f2 = [T::zero(); DIM_INNER];
    for c in 0..DIM_INNER {
        d_f1[c] = r * ctx.e_lambda * (d_t00f[c] + d_t00b[c]);
        d_f2[c] = -r * ctx.e_lambda * (d_t11f[c] + d_t11b[c]);
    }
    d_f1[LAMBDA] = d_f1[LAMBDA] - ctx.e_lambda / r + r * ctx.e_lambda * (t00 + half * gam2 * ctx.v);
    d_f2[LAMBDA] = d_f2[LAMBDA] + ctx.e_lambda / r - r * ctx.e_lambda * (t11 + half * gam2 * ctx.v);
    d_f1[PHI] = d_f1[PHI] + r * ctx.e_lambda * half * gam2 * ctx.vp;
    d_f2[PHI] = d_f2[PHI] - r * ctx.e_lambda * half * gam2 * ctx.vp;
    d_f1[XI] = d_f1[XI] + two * r * xi;
    d_f2[XI] = d_f2[XI] + two * r * xi;
    let df1_om = r * ctx.e_lambda * dt00b_om;
    let df2_om = -r * ctx.e_lambda * dt11b_om;
    let df1_r = -curv / r + g1;
    let df2_r = curv / r - g2;

    let dampen = half * (f1 - f2);
    let two_over_r = two / r;

    // Row F1, F2.
    for c in 0..N {
        q[LAMBDA][c] = d_f1[c];
        q[NU][c] = d_f2[c];
    }
    d_om[LAMBDA] = df1_om;
    d_om[NU] = df2_om;
    d_rs[LAMBDA] = x * df1_r;
    d_rs[NU] = x * df2_r;

    // Reduction rows: phi' = xi, sigma' = eta.
    q[PHI][XI] = T::one();
    q[SIGMA][ETA] = T::one();

    // Row F3 = -2 xi / r + dampen * xi + src3.
    for c in 0..N {
        q[XI][c] = half * (d_f1[c] - d_f2[c]) * xi + d_src3[c];
    }
    q[XI][XI] = q[XI][XI] - two_over_r + dampen;
    d_om[XI] = half * (df1_om - df2_om) * xi + dsrc3_om;
    d_rs[XI] = x * (two_over_r / r * xi + half * (df1_r - df2_r) * xi);

    // Row F4 = -2 eta / r + (dampen - 2 alpha xi) eta - src4.
    for c in 0..N {
        q[ETA][c] = half * (d_f1[c] - d_f2[c]) * eta - d_src4[c];
    }
    q[ETA][XI] = q[ETA][XI] - two * ctx.alpha * eta;
    q[ETA][ETA] = q[ETA][ETA] - two_over_r + dampen - two * ctx.alpha * xi;
    d_om[ETA] = half * (df1_om - df2_om) * eta - dsrc4_om;
    d_rs[ETA] = x * (two_over_r / r * eta + half * (df1_r - df2_r) * eta);

    // Row F5 = -ratio [F2/2 + alpha xi].
    if with_fermions && N == DIM_INNER {
        let bracket = half * f2 + ctx.alpha * xi;
        for c in 0..N {
            q[MU][c] = -ctx.ratio * half * d_f2[c];
        }
        q[MU][XI] = q[MU][XI] - ctx.ratio * ctx.alpha;
        q[MU][MU] = q[MU][MU] - eos_source_ratio_prime::<T>() * bracket;
        d_om[MU] = -ctx.ratio * half * df2_om;
        d_rs[MU] = x * (-ctx.ratio * half * df2_r);
    }

    (q, d_rs, d_om)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params_ref() -> ModelParams<f64> {
        ModelParams::new(0.1, 10.0, 1.0, 0.4, 1.2).unwrap()
    }

    #[test]
    fn coupling_values() {
        let (a, alpha) = coupling(0.0f64);
        assert_eq!(a, 1.0);
        assert_abs_diff_eq!(alpha, 0.5773502691896258, epsilon = 1e-16);

        let (a, alpha) = coupling(3.0f64.sqrt());
        assert_relative_eq!(a, std::f64::consts::E, max_relative = 1e-15);
        assert_abs_diff_eq!(alpha, 1.0 / 3.0f64.sqrt(), epsilon = 1e-16);

        // A(phi) * A(-phi) = 1
        let (ap, _) = coupling(-0.2f64);
        let (am, _) = coupling(0.2f64);
        assert_relative_eq!(ap * am, 1.0, max_relative = 1e-15);
        assert_relative_eq!(ap, (-0.2f64 / 3.0f64.sqrt()).exp(), max_relative = 1e-15);
    }

    #[test]
    fn dilaton_potential_values() {
        let (v, vp) = dilaton_potential(0.0f64);
        assert_eq!(v, 0.0);
        assert_eq!(vp, 0.0);

        // Small-phi expansion V = 2 phi^2 + O(phi^3).
        let phi = 1e-4f64;
        let (v, _) = dilaton_potential(phi);
        assert_relative_eq!(v, 2.0 * phi * phi, max_relative = 1e-2);

        // Derivative against central finite differences at phi = 0.3.
        let h = 1e-6f64;
        let (_, vp) = dilaton_potential(0.3f64);
        let (vp_hi, _) = dilaton_potential(0.3 + h);
        let (vp_lo, _) = dilaton_potential(0.3 - h);
        let fd = (vp_hi - vp_lo) / (2.0 * h);
        assert_abs_diff_eq!(vp, fd, epsilon = 1e-8);

        // Second derivative against finite differences of V'.
        let (_, d_hi) = dilaton_potential(0.3 + h);
        let (_, d_lo) = dilaton_potential(0.3 - h);
        let fd2 = (d_hi - d_lo) / (2.0 * h);
        assert_abs_diff_eq!(dilaton_potential_second(0.3f64), fd2, epsilon = 1e-7);
    }

    #[test]
    fn boson_potential_values() {
        let (w, wp) = boson_potential(0.0f64, 5.0);
        assert_eq!(w, 0.0);
        assert_eq!(wp, -0.5);

        let (w, wp) = boson_potential(1.0f64, 0.0);
        assert_eq!(w, -0.5);
        assert_eq!(wp, -0.5);

        let (w, wp) = boson_potential(0.16f64, 10.0);
        assert_abs_diff_eq!(w, -0.144, epsilon = 1e-15);
        assert_abs_diff_eq!(wp, -1.3, epsilon = 1e-15);
    }

    #[test]
    fn eos_values() {
        let (f, g, fp, n) = eos(0.0f64).unwrap();
        assert_eq!((f, g, fp, n), (0.0, 0.0, 0.0, 0.0));

        // 50-digit reference values (mpmath).
        let (f, g, fp, n) = eos(1.0f64).unwrap();
        assert_relative_eq!(f, 0.153738399835691753, max_relative = 1e-14);
        assert_relative_eq!(g, 1.260475162537403295, max_relative = 1e-14);
        assert_relative_eq!(fp, 0.353553390593273762, max_relative = 1e-14);
        assert_eq!(n, 1.0);

        let (f, g, fp, _) = eos(1.2f64).unwrap();
        assert_relative_eq!(f, 0.2333692388065164329, max_relative = 1e-14);
        assert_relative_eq!(g, 1.716399978306114054, max_relative = 1e-14);
        assert_relative_eq!(fp, 0.4431293675255978378, max_relative = 1e-14);

        // Series region against extended-precision closed form.
        let (f, g, _, _) = eos(1e-6f64).unwrap();
        assert_relative_eq!(f, 1.999999285714702381e-16, max_relative = 1e-6);
        assert_relative_eq!(f, 1e-6f64.powf(2.5) / 5.0, max_relative = 1e-6);
        assert_relative_eq!(g, 1.000000299999946429e-9, max_relative = 1e-12);

        assert!(eos(-1e-12f64).is_err());
    }

    #[test]
    fn eos_series_threshold_continuity() {
        // Both branches at the threshold agree (reference: mpmath at mu = 1e-4).
        let mu = MU_SERIES_THRESHOLD;
        let (f_lo, g_lo, _, _) = eos(mu * (1.0 - 1e-14)).unwrap();
        let (f_hi, g_hi, _, _) = eos(mu * (1.0 + 1e-14)).unwrap();
        assert_relative_eq!(f_lo, 1.999928575594954025e-11, max_relative = 1e-12);
        assert_relative_eq!(f_hi, f_lo, max_relative = 1e-7);
        assert_relative_eq!(g_hi, g_lo, max_relative = 1e-12);
        assert_relative_eq!(g_lo, 1.000029999464306547e-6, max_relative = 1e-12);
    }

    #[test]
    fn eos_positivity_monotonicity() {
        // f, g, f', n nonnegative and nondecreasing; trace_f >= 0.
        let p = params_ref();
        let mut prev = (0.0, 0.0, 0.0, 0.0);
        for k in 0..=10_000 {
            let mu = 10.0 * k as f64 / 10_000.0;
            let (f, g, fp, n) = eos(mu).unwrap();
            assert!(f >= prev.0 && g >= prev.1 && fp >= prev.2 && n >= prev.3, "mu = {mu}");
            let s = stress(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, Some(mu), 0.8, &p);
            assert!(s.trace_f >= 0.0, "trace_f < 0 at mu = {mu}");
            prev = (f, g, fp, n);
        }
    }

    #[test]
    fn source_ratio_limit_and_continuity() {
        // Limit 2 at the surface.
        assert!((eos_source_ratio(1e-8f64) - 2.0).abs() < 1e-6);
        // Extended-precision closed form converges to 2 from above.
        for mu in [1e-4f64, 1e-5, 1e-6] {
            assert_relative_eq!(eos_source_ratio(mu), 2.0 * (1.0 + mu), max_relative = 1e-10);
        }
        // Direct branch at mu = 1: (g + f)/f' with the analytic derivative.
        let (f, g, fp, _) = eos(1.0f64).unwrap();
        assert_relative_eq!(eos_source_ratio(1.0f64), (g + f) / fp, max_relative = 1e-14);
        // fp against central finite differences.
        let h = 1e-6;
        let (fh, ..) = eos(1.0 + h).unwrap();
        let (fl, ..) = eos(1.0 - h).unwrap();
        assert_abs_diff_eq!(fp, (fh - fl) / (2.0 * h), epsilon = 1e-8);
        // Continuity across the series threshold.
        let mu = MU_SERIES_THRESHOLD;
        let below = eos_source_ratio(mu * (1.0 - 1e-12));
        let above = eos_source_ratio(mu * (1.0 + 1e-12));
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn stress_zero_state() {
        let p = params_ref();
        let s = stress(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, None, 0.7, &p);
        assert_eq!(
            (s.t00_b, s.t11_b, s.trace_b, s.t00_f, s.t11_f, s.trace_f),
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        );
        // mu = 0 also kills the fermion components.
        let s = stress(0.1, 0.0, 0.2, 0.0, 0.1, 0.1, Some(0.0), 0.7, &p);
        assert_eq!((s.t00_f, s.t11_f, s.trace_f), (0.0, 0.0, 0.0));
    }

    #[test]
    fn stress_central_boson() {
        // sigma = sigma_c, eta = nu = lambda = phi = 0, Lambda = 0:
        // t00_b = (1/2) Omega^2 sigma_c^2 + (1/2) sigma_c^2.
        let p = ModelParams::new(0.1, 0.0, 1.0, 0.4, 1.2).unwrap();
        let om = 0.8;
        let sc = p.sigma_c;
        let s = stress(0.0, 0.0, sc, 0.0, 0.0, 0.0, None, om, &p);
        assert_relative_eq!(s.t00_b, 0.5 * om * om * sc * sc + 0.5 * sc * sc, max_relative = 1e-14);
        assert_relative_eq!(s.t11_b, -0.5 * om * om * sc * sc + 0.5 * sc * sc, max_relative = 1e-14);
    }

    #[test]
    fn rhs_flat_vacuum_fixed_point() {
        let p = params_ref();
        for x in [0.0, 0.3, 1.0] {
            let f = rhs_inner(x, &[0.0; 7], 2.5, 0.8, &p).unwrap();
            assert_eq!(f, [0.0; 7]);
        }
        for x in [1.0, 3.0, 11.0] {
            let f = rhs_outer(x, &[0.0; 6], 2.5, 0.8, &p).unwrap();
            assert_eq!(f, [0.0; 6]);
        }
    }

    #[test]
    fn rhs_center_limits() {
        // gamma = 0: F4(0) = -(1/3) sigma_c [Omega^2 + 2 W'(sigma_c^2)];
        // Lambda = 0, Omega^2 = 1 makes it vanish.
        let p = ModelParams::new(0.0, 0.0, 1.0, 0.4, 1.2).unwrap();
        let y = [0.0, 0.0, 0.0, 0.0, p.sigma_c, 0.0, p.mu_c];
        let f = rhs_inner(0.0, &y, 2.5, 1.0, &p).unwrap();
        assert_abs_diff_eq!(f[comp::ETA], 0.0, epsilon = 1e-15);
        let om: f64 = 0.8;
        let f = rhs_inner(0.0, &y, 2.5, om, &p).unwrap();
        let expect = -(1.0 / 3.0) * p.sigma_c * (om * om + 2.0 * (-0.5));
        assert_relative_eq!(f[comp::ETA], expect, max_relative = 1e-14);
        assert_eq!(f[comp::LAMBDA], 0.0);
        assert_eq!(f[comp::NU], 0.0);
        assert_eq!(f[comp::MU], 0.0);
    }

    /// Smooth trial state with the regular-center structure:
    /// even functions for (lambda, nu, phi, sigma, mu), odd for (xi, eta).
    fn smooth_state(x: f64, r_s: f64) -> [f64; 7] {
        let r = r_s * x;
        [
            0.08 * r * r / (1.0 + r * r),
            -0.2 + 0.05 * r * r / (1.0 + r * r),
            -0.1 + 0.02 * r * r,
            0.04 * r,
            0.4 * (-r * r / 4.0).exp(),
            0.4 * (-r * r / 4.0).exp() * (-r / 2.0),
            (1.2 - 0.9 * r * r).max(0.1),
        ]
    }

    #[test]
    fn rhs_center_consistency() {
        // rhs at x = 1e-4, 1e-5, 1e-6 converges to the regularized x = 0
        // values with observed order >= 1, for a smooth state whose odd
        // components carry the self-consistent center slopes
        // xi ~ phi''(0) r, eta ~ sigma''(0) r.
        let p = params_ref();
        let r_s = 2.5;
        let y0 = [0.0, -0.2, -0.1, 0.0, 0.4, 0.0, 1.2];
        let f0 = rhs_inner(0.0, &y0, r_s, 0.8, &p).unwrap();
        let state = |x: f64| {
            let r = r_s * x;
            [
                0.05 * r * r,
                -0.2 + 0.03 * r * r,
                -0.1 + 0.5 * f0[comp::XI] * r * r,
                f0[comp::XI] * r,
                0.4 + 0.5 * f0[comp::ETA] * r * r,
                f0[comp::ETA] * r,
                1.2 - 0.4 * r * r,
            ]
        };
        let mut errs = Vec::new();
        for x in [1e-4, 1e-5, 1e-6] {
            let f = rhs_inner(x, &state(x), r_s, 0.8, &p).unwrap();
            let err = f
                .iter()
                .zip(f0.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        // order >= 1 between successive decades
        assert!(errs[1] < errs[0] / 5.0, "{errs:?}");
        assert!(errs[2] < errs[1] / 5.0, "{errs:?}");
    }

    #[test]
    fn rhs_surface_fermi_row() {
        let p = params_ref();
        let mut y = smooth_state(0.99, 2.5);
        y[comp::MU] = 1e-10;
        let f = rhs_inner(0.99, &y, 2.5, 0.8, &p).unwrap();
        let q = jacobians_inner(0.99, &y, 2.5, 0.8, &p).unwrap().0;
        let _ = q;
        let alpha = 1.0 / 3.0f64.sqrt();
        let expect = -2.0 * (0.5 * f[comp::NU] + alpha * y[comp::XI]);
        assert!((f[comp::MU] - expect).abs() < 1e-5, "{} vs {}", f[comp::MU], expect);
        assert!(f[comp::MU].is_finite());
    }

    #[test]
    fn rhs_inner_outer_interface_consistency() {
        // With mu = 0 appended, the first six interior components equal the
        // exterior ones exactly.
        let p = params_ref();
        let mut y = smooth_state(1.0, 2.5);
        y[comp::MU] = 0.0;
        let fi = rhs_inner(1.0, &y, 2.5, 0.8, &p).unwrap();
        let y6: [f64; 6] = y[..6].try_into().unwrap();
        let fe = rhs_outer(1.0, &y6, 2.5, 0.8, &p).unwrap();
        for c in 0..6 {
            assert_eq!(fi[c], fe[c], "component {c}");
        }
        // Jacobian blocks agree as well.
        let (qi, _, _) = jacobians_inner(1.0, &y, 2.5, 0.8, &p).unwrap();
        let (qe, _, _) = jacobians_outer(1.0, &y6, 2.5, 0.8, &p).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                assert_eq!(qi[r][c], qe[r][c], "entry ({r},{c})");
            }
        }
    }

    #[test]
    fn rhs_schwarzschild_probe() {
        // Vacuum exterior: sigma = eta = phi = xi = 0,
        // lambda = -ln(1 - 2m/r), nu = ln(1 - 2m/r) solves
        // dlambda/dr = -dnu/dr = -(1/r)(1 - e^lambda).
        let p = params_ref();
        let m = 0.1;
        let r: f64 = 50.0;
        let r_s = 2.5;
        let x = r / r_s;
        let lam = -(1.0 - 2.0 * m / r).ln();
        let nu = (1.0 - 2.0 * m / r).ln();
        let y = [lam, nu, 0.0, 0.0, 0.0, 0.0];
        let f = rhs_outer(x, &y, r_s, 0.8, &p).unwrap();
        let expect = (1.0 - lam.exp()) / r;
        assert_abs_diff_eq!(f[comp::LAMBDA], expect, epsilon = 1e-12);
        assert_abs_diff_eq!(f[comp::NU], -expect, epsilon = 1e-12);
        // Analytic: dlambda/dr of the exact solution (negative: lambda decays).
        let dlam = -(2.0 * m / (r * r)) / (1.0 - 2.0 * m / r);
        assert_abs_diff_eq!(f[comp::LAMBDA], dlam, epsilon = 1e-12);
    }

    #[test]
    fn rhs_scaling_identity() {
        // F depends on (x, R_s) only through r = R_s x.
        let p = params_ref();
        let y = smooth_state(0.6, 2.5);
        let a = rhs_inner(0.6, &y, 2.5, 0.8, &p).unwrap();
        let b = rhs_inner(0.3, &y, 5.0, 0.8, &p).unwrap();
        for c in 0..7 {
            assert_eq!(a[c], b[c]);
        }
    }

    fn random_state(rng: &mut impl Rng) -> [f64; 7] {
        [
            rng.gen_range(-0.3..0.5),
            rng.gen_range(-0.6..0.3),
            rng.gen_range(-0.4..0.4),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(0.0..0.5),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(0.05..1.5),
        ]
    }

    fn fd_check_inner(x: f64, y: &[f64; 7], r_s: f64, om: f64, p: &ModelParams<f64>) {
        let (q, d_rs, d_om) = jacobians_inner(x, y, r_s, om, p).unwrap();
        // State Jacobian vs central differences.
        for c in 0..7 {
            let h = 1e-6 * y[c].abs().max(1.0);
            let mut yp = *y;
            let mut ym = *y;
            yp[c] += h;
            ym[c] -= h;
            let fp = rhs_inner(x, &yp, r_s, om, p).unwrap();
            let fm = rhs_inner(x, &ym, r_s, om, p).unwrap();
            for row in 0..7 {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                let scale = q[row][c].abs().max(1e-3);
                assert!(
                    (q[row][c] - fd).abs() <= 1e-5 * scale + 1e-8,
                    "dF{row}/dy{c} analytic {} vs fd {} at x={x}",
                    q[row][c],
                    fd
                );
            }
        }
        // R_s derivative (x dF/dr at fixed y).
        let h = 1e-6 * r_s;
        let fp = rhs_inner(x, y, r_s + h, om, p).unwrap();
        let fm = rhs_inner(x, y, r_s - h, om, p).unwrap();
        for row in 0..7 {
            let fd = (fp[row] - fm[row]) / (2.0 * h);
            assert!(
                (d_rs[row] - fd).abs() <= 1e-5 * d_rs[row].abs().max(1e-3) + 1e-8,
                "dF{row}/dRs {} vs {}",
                d_rs[row],
                fd
            );
        }
        // Omega derivative.
        let h = 1e-6;
        let fp = rhs_inner(x, y, r_s, om + h, p).unwrap();
        let fm = rhs_inner(x, y, r_s, om - h, p).unwrap();
        for row in 0..7 {
            let fd = (fp[row] - fm[row]) / (2.0 * h);
            assert!(
                (d_om[row] - fd).abs() <= 1e-5 * d_om[row].abs().max(1e-3) + 1e-8,
                "dF{row}/dOmega {} vs {}",
                d_om[row],
                fd
            );
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let p = params_ref();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let y = random_state(&mut rng);
            let x = rng.gen_range(0.05..1.0);
            let r_s = rng.gen_range(1.0..4.0);
            let om = rng.gen_range(0.3..0.95);
            fd_check_inner(x, &y, r_s, om, &p);
        }
    }

    #[test]
    fn jacobians_outer_match_finite_differences() {
        let p = params_ref();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let y7 = random_state(&mut rng);
            let y: [f64; 6] = y7[..6].try_into().unwrap();
            let x = rng.gen_range(1.0..8.0);
            let r_s = rng.gen_range(1.0..4.0);
            let om = rng.gen_range(0.3..0.95);
            let (q, _, d_om) = jacobians_outer(x, &y, r_s, om, &p).unwrap();
            for c in 0..6 {
                let h = 1e-6 * y[c].abs().max(1.0);
                let mut yp = y;
                let mut ym = y;
                yp[c] += h;
                ym[c] -= h;
                let f_p = rhs_outer(x, &yp, r_s, om, &p).unwrap();
                let f_m = rhs_outer(x, &ym, r_s, om, &p).unwrap();
                for row in 0..6 {
                    let fd = (f_p[row] - f_m[row]) / (2.0 * h);
                    assert!(
                        (q[row][c] - fd).abs() <= 1e-5 * q[row][c].abs().max(1e-3) + 1e-8,
                        "outer dF{row}/dy{c}"
                    );
                }
            }
            let h = 1e-6;
            let f_p = rhs_outer(x, &y, r_s, om + h, &p).unwrap();
            let f_m = rhs_outer(x, &y, r_s, om - h, &p).unwrap();
            for row in 0..6 {
                let fd = (f_p[row] - f_m[row]) / (2.0 * h);
                assert!((d_om[row] - fd).abs() <= 1e-5 * d_om[row].abs().max(1e-3) + 1e-8);
            }
        }
    }

    #[test]
    fn jacobian_reduction_rows() {
        let p = params_ref();
        let (q, _, _) = jacobians_inner(0.5, &[0.0; 7], 2.5, 0.8, &p).unwrap();
        // phi-row selects xi exactly; sigma-row selects eta.
        for c in 0..7 {
            assert_eq!(q[comp::PHI][c], if c == comp::XI { 1.0 } else { 0.0 });
            assert_eq!(q[comp::SIGMA][c], if c == comp::ETA { 1.0 } else { 0.0 });
        }
        // Zero state: everything finite.
        let (q0, _, _) = jacobians_inner(0.0, &[0.0; 7], 2.5, 0.8, &p).unwrap();
        for r in q0 {
            for v in r {
                assert!(v.is_finite());
            }
        }
    }

    #[test]
    fn jacobian_omega_mu_row_structure() {
        // dF5/dOmega = -ratio * d(F2/2)/dOmega.
        let p = params_ref();
        let y = smooth_state(0.5, 2.5);
        let (_, _, d_om) = jacobians_inner(0.5, &y, 2.5, 0.8, &p).unwrap();
        let h = 1e-6;
        let fp = rhs_inner(0.5, &y, 2.5, 0.8 + h, &p).unwrap();
        let fm = rhs_inner(0.5, &y, 2.5, 0.8 - h, &p).unwrap();
        let fd = (fp[comp::MU] - fm[comp::MU]) / (2.0 * h);
        assert!((d_om[comp::MU] - fd).abs() < 1e-6);
        let ratio = eos_source_ratio(y[comp::MU]);
        let fd_f2 = (fp[comp::NU] - fm[comp::NU]) / (2.0 * h);
        assert_relative_eq!(d_om[comp::MU], -ratio * 0.5 * fd_f2, max_relative = 1e-6);
    }

    #[test]
    fn f32_instantiation() {
        let p = ModelParams::<f32>::new(0.1, 10.0, 1.0, 0.4, 1.2).unwrap();
        let f = rhs_inner(0.5f32, &[0.0; 7], 2.5, 0.8, &p).unwrap();
        assert_eq!(f, [0.0f32; 7]);
        let (f, g, _, _) = eos(1.0f32).unwrap();
        assert_relative_eq!(f, 0.1537384, max_relative = 1e-5);
        assert_relative_eq!(g, 1.2604752, max_relative = 1e-5);
    }
}
