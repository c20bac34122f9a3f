//! Post-processing integrals over converged solutions: total mass, species
//! rest masses and binding energy.

use serde::Serialize;

use crate::collocation::HermiteGridFunction;
use crate::error::Result;
use crate::layout::Layout;
use crate::model::{coupling, dilaton_potential, stress, ModelParams, SpectralTriple};
use crate::scalar::Real;
use crate::solution::Solution;

/// Dimensionless masses and binding energy of a configuration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Observables<T> {
    /// Total (gravitational) mass.
    pub m_total: T,
    /// Boson rest mass.
    pub m_rb: T,
    /// Fermion rest mass.
    pub m_rf: T,
    /// Binding energy M - M_RB - M_RF.
    pub e_b: T,
    /// Interior contribution to the total mass.
    pub m_inner: T,
    /// Exterior contribution to the total mass.
    pub m_outer: T,
    /// Magnitude of the mass integrand at the outermost quadrature point
    /// (truncation diagnostic).
    pub tail_integrand: T,
}

/// 4-point Gauss-Legendre abscissae/weights on [-1, 1].
const GL4_X: [f64; 4] = [
    -0.8611363115940526,
    -0.3399810435848563,
    0.3399810435848563,
    0.8611363115940526,
];
const GL4_W: [f64; 4] = [
    0.34785484513745385,
    0.6521451548625461,
    0.6521451548625461,
    0.34785484513745385,
];

fn quad_over<T: Real>(
    grid: &HermiteGridFunction<T>,
    refine: usize,
    mut f: impl FnMut(T, &[T]) -> T,
) -> Result<(T, T)> {
    let mesh = grid.mesh().clone();
    let dim = grid.dim();
    let mut vals = vec![T::zero(); dim];
    let mut ders = vec![T::zero(); dim];
    let mut total = T::zero();
    let mut last = T::zero();
    let panels = refine.max(1);
    for j in 0..mesh.n_cells() {
        let x0 = mesh.nodes()[j];
        let h = mesh.cell_width(j) / T::from_usize(panels).unwrap();
        for p in 0..panels {
            let a = x0 + h * T::from_usize(p).unwrap();
            let c = a + h * T::c(0.5);
            let half_h = h * T::c(0.5);
            for (xi, wi) in GL4_X.iter().zip(GL4_W.iter()) {
                let x = c + half_h * T::c(*xi);
                grid.evaluate_into(x, &mut vals, &mut ders)?;
                last = f(x, &vals);
                total = total + half_h * T::c(*wi) * last;
            }
        }
    }
    Ok((total, last))
}

/// Compute all observables; `refine` subdivides each mesh cell into that
/// many quadrature panels (1 = default).
pub fn compute<T: Real>(
    params: &ModelParams<T>,
    spectral: &SpectralTriple<T>,
    inner: &HermiteGridFunction<T>,
    outer: &HermiteGridFunction<T>,
    refine: usize,
) -> Result<Observables<T>> {
    let lay = Layout::for_mixed(spectral.omega.is_some());
    let r_s = spectral.r_s;
    let om = spectral.omega_or_zero();
    let r_s3 = r_s * r_s * r_s;
    let half = T::c(0.5);
    let gam2 = params.gamma * params.gamma;

    // Mass integrand r^2 (T00_B + T00_F + e^-lambda xi^2 + gamma^2 V / 2),
    // in x-units (factor R_s^3).
    let mass_inner = |x: T, y: &[T]| {
        let (lam, nu, phi, xi, sigma, eta, mu) = lay.unpack_inner(y);
        let s = stress(phi, xi, sigma, eta, nu, lam, Some(mu), om, params);
        let (v, _) = dilaton_potential(phi);
        let integrand = s.t00_b + s.t00_f + (-lam).exp() * xi * xi + half * gam2 * v;
        x * x * integrand
    };
    let mass_outer = |x: T, y: &[T]| {
        let (lam, nu, phi, xi, sigma, eta) = lay.unpack_outer(y);
        let s = stress(phi, xi, sigma, eta, nu, lam, None, om, params);
        let (v, _) = dilaton_potential(phi);
        let integrand = s.t00_b + (-lam).exp() * xi * xi + half * gam2 * v;
        x * x * integrand
    };
    let (mi, _) = quad_over(inner, refine, mass_inner)?;
    let (me, tail) = quad_over(outer, refine, mass_outer)?;
    let m_inner = r_s3 * mi;
    let m_outer = r_s3 * me;
    let m_total = m_inner + m_outer;

    // Boson rest mass: Omega r^2 A^2 e^{(lambda-nu)/2} sigma^2 over both
    // domains; identically zero in the pure-fermion variant.
    let m_rb = if spectral.omega.is_some() {
        let f_in = |x: T, y: &[T]| {
            let (lam, nu, phi, _xi, sigma, _eta, _mu) = lay.unpack_inner(y);
            let (a, _) = coupling(phi);
            x * x * a * a * ((lam - nu) * half).exp() * sigma * sigma
        };
        let f_out = |x: T, y: &[T]| {
            let (lam, nu, phi, _xi, sigma, _eta) = lay.unpack_outer(y);
            let (a, _) = coupling(phi);
            x * x * a * a * ((lam - nu) * half).exp() * sigma * sigma
        };
        let (bi, _) = quad_over(inner, refine, f_in)?;
        let (bo, _) = quad_over(outer, refine, f_out)?;
        om * r_s3 * (bi + bo)
    } else {
        T::zero()
    };

    // Fermion rest mass: b r^2 A^3 e^{lambda/2} mu^{3/2}, interior only.
    let f_rf = |x: T, y: &[T]| {
        let (lam, _nu, phi, _xi, _sigma, _eta, mu) = lay.unpack_inner(y);
        let (a, _) = coupling(phi);
        let mu = mu.max(T::zero());
        x * x * params.b * a * a * a * (lam * half).exp() * mu * mu.sqrt()
    };
    let (fi, _) = quad_over(inner, refine, f_rf)?;
    let m_rf = r_s3 * fi;

    Ok(Observables {
        m_total,
        m_rb,
        m_rf,
        e_b: binding_energy(m_total, m_rb, m_rf),
        m_inner,
        m_outer,
        tail_integrand: tail.abs() * r_s3,
    })
}

/// E_b = M - M_RB - M_RF.
#[inline]
pub fn binding_energy<T: Real>(m_total: T, m_rb: T, m_rf: T) -> T {
    m_total - m_rb - m_rf
}

/// Total mass of a solution, recomputed from the profiles.
pub fn total_mass<T: Real>(sol: &Solution<T>) -> Result<T> {
    Ok(compute(&sol.params, &sol.spectral, &sol.inner, &sol.outer, 1)?.m_total)
}

/// Boson rest mass of a solution.
pub fn boson_rest_mass<T: Real>(sol: &Solution<T>) -> Result<T> {
    Ok(compute(&sol.params, &sol.spectral, &sol.inner, &sol.outer, 1)?.m_rb)
}

/// Fermion rest mass of a solution.
pub fn fermion_rest_mass<T: Real>(sol: &Solution<T>) -> Result<T> {
    Ok(compute(&sol.params, &sol.spectral, &sol.inner, &sol.outer, 1)?.m_rf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::{build_mesh, Grading};
    use std::sync::Arc;

    fn mk_grids(
        mixed: bool,
        fill: impl Fn(usize, f64) -> f64,
    ) -> (HermiteGridFunction<f64>, HermiteGridFunction<f64>) {
        let lay = Layout::for_mixed(mixed);
        let mi = Arc::new(build_mesh(0.0, 1.0, 16, Grading::Uniform).unwrap());
        let me = Arc::new(build_mesh(1.0, 8.0, 24, Grading::Uniform).unwrap());
        let inner = HermiteGridFunction::from_fns(mi, lay.n_inner, |c, x| fill(lay.map_inner[c], x), |_, _| 0.0);
        let outer = HermiteGridFunction::from_fns(me, lay.n_outer, |c, x| fill(lay.map_outer[c], x), |_, _| 0.0);
        (inner, outer)
    }

    #[test]
    fn zero_profiles_zero_masses() {
        let params = ModelParams::new(0.1, 10.0, 1.0, 0.4, 1.2).unwrap();
        let spectral = SpectralTriple::mixed(2.5, 0.8, 0.0);
        let (inner, outer) = mk_grids(true, |_, _| 0.0);
        let obs = compute(&params, &spectral, &inner, &outer, 1).unwrap();
        assert_eq!(obs.m_total, 0.0);
        assert_eq!(obs.m_rb, 0.0);
        assert_eq!(obs.m_rf, 0.0);
        assert_eq!(obs.e_b, 0.0);
    }

    #[test]
    fn flat_constant_mu_fermion_mass() {
        // lambda = phi = 0, mu = mu0 on [0, R]: M_RF = b mu0^{3/2} R^3 / 3.
        let params = ModelParams::new(0.0, 0.0, 1.7, 0.4, 1.2).unwrap();
        let r = 2.0;
        let spectral = SpectralTriple::mixed(r, 0.8, 0.0);
        let mu0: f64 = 0.9;
        let (inner, outer) = mk_grids(true, |g, _x| if g == 6 { mu0 } else { 0.0 });
        let obs = compute(&params, &spectral, &inner, &outer, 1).unwrap();
        let expect = params.b * mu0.powf(1.5) * r.powi(3) / 3.0;
        assert!((obs.m_rf - expect).abs() < 1e-13 * expect, "{} vs {}", obs.m_rf, expect);
    }

    #[test]
    fn sigma_zero_kills_boson_mass() {
        let params = ModelParams::new(0.1, 10.0, 1.0, 0.0, 1.2).unwrap();
        let spectral = SpectralTriple::pure_fermion(2.0, 0.0);
        let lay = Layout::for_mixed(false);
        let mi = Arc::new(build_mesh(0.0, 1.0, 8, Grading::Uniform).unwrap());
        let me = Arc::new(build_mesh(1.0, 5.0, 8, Grading::Uniform).unwrap());
        let inner = HermiteGridFunction::from_fns(mi, lay.n_inner, |c, _| if lay.map_inner[c] == 6 { 0.5 } else { 0.0 }, |_, _| 0.0);
        let outer = HermiteGridFunction::zeros(me, lay.n_outer);
        let obs = compute(&params, &spectral, &inner, &outer, 1).unwrap();
        assert_eq!(obs.m_rb, 0.0);
        assert!(obs.m_rf > 0.0);
    }

    #[test]
    fn binding_energy_arithmetic() {
        assert_eq!(binding_energy(1.0, 0.0, 1.0), 0.0);
        assert!((binding_energy(1.0f64, 0.2, 0.9) - (-0.1)).abs() < 1e-15);
        let obs = Observables::<f64> {
            m_total: 1.0,
            m_rb: 0.2,
            m_rf: 0.9,
            e_b: binding_energy(1.0, 0.2, 0.9),
            m_inner: 0.0,
            m_outer: 0.0,
            tail_integrand: 0.0,
        };
        assert!((obs.e_b - (obs.m_total - obs.m_rb - obs.m_rf)).abs() < 1e-12);
    }

    #[test]
    fn domain_additivity() {
        let params = ModelParams::new(0.1, 5.0, 1.0, 0.3, 1.0).unwrap();
        let spectral = SpectralTriple::mixed(2.0, 0.8, -0.05);
        let (inner, outer) = mk_grids(true, |g, x| match g {
            0 => 0.1 * x,
            1 => -0.2 + 0.02 * x,
            2 => -0.05 / (1.0 + x),
            4 => 0.3 * (-x).exp(),
            6 => (1.0 - x * x).max(0.0),
            _ => 0.0,
        });
        let obs = compute(&params, &spectral, &inner, &outer, 1).unwrap();
        assert!((obs.m_inner + obs.m_outer - obs.m_total).abs() <= 1e-12 * obs.m_total.abs().max(1.0));
    }
}
