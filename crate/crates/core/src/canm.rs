//! Continuous Analogue of Newton Method driver.
//!
//! Each iteration linearizes the interior and exterior systems about the
//! current iterate, solves four linear BVPs per domain (s, u, v, w) against
//! one shared factorization, closes the spectral increments (rho, omega,
//! phi) through the matching system over the (nu, xi, eta) traces at the
//! interface, composes z = s + rho u + omega v + phi w, and advances with
//! the Ermakov-Kalitkin step. Near convergence the linearized systems turn
//! ill-conditioned; below `freeze_threshold` the factorizations and the
//! matching matrix are frozen (Newton-Kantorovich regime) and only the
//! defect right-hand sides are refreshed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::collocation::{
    assemble, build_mesh, defect_sumsq, geometric_ratio_for_first_cell, BcRow, FactoredSystem,
    Grading, HermiteGridFunction, LinearBvp, Mesh, Problem,
};
use crate::dense::solve_dense;
use crate::error::{Error, Result};
use crate::layout::{Layout, MatchRow, L_ETA, L_LAMBDA, L_NU, L_PHI, L_SIGMA, L_XI};
use crate::model::{ModelParams, SpectralTriple};
use crate::observables;
use crate::scalar::Real;
use crate::solution::{ConvergenceReport, IterationRecord, Solution};

/// Far-field closure at the truncated outer boundary.
///
/// `Dirichlet` pins nu = phi = sigma = 0 at X_inf. `Robin` (the default)
/// replaces the nu row by the vacuum-tail relation nu + ln(1 + r nu') = 0,
/// which absorbs the slow 1/r tail of nu; its small-tail linearization is
/// nu + r nu' = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FarField {
    Dirichlet,
    Robin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanmConfig<T> {
    /// Termination threshold for delta(tau_opt). Accepted range 1e-12..=1e-8.
    pub epsilon: T,
    pub max_iter: usize,
    /// Residual below which the frozen-Jacobian regime engages.
    pub freeze_threshold: T,
    /// Master switch for the frozen-Jacobian regime (full Newton throughout
    /// when false).
    pub freeze_enabled: bool,
    /// Lower clamp of the Ermakov-Kalitkin step.
    pub tau_min: T,
    pub cells_inner: usize,
    pub cells_outer: usize,
    /// Outer truncation in x-units; derived from `r_max` when absent.
    pub x_inf: Option<T>,
    /// Outer truncation in r-units used when `x_inf` is None (X_inf = r_max / R_s0).
    pub r_max: T,
    pub far_field: FarField,
    /// Initial boson frequency.
    pub omega0: T,
    /// Initial star radius; estimated from the low-density polytrope limit
    /// when absent.
    pub r_s0: Option<T>,
    /// Initial interface dilaton value.
    pub phi_s0: T,
}

impl<T: Real> Default for CanmConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::c(1e-10),
            max_iter: 50,
            freeze_threshold: T::c(1e-3),
            freeze_enabled: true,
            tau_min: T::c(1e-3),
            cells_inner: 200,
            cells_outer: 400,
            x_inf: None,
            r_max: T::c(40.0),
            far_field: FarField::Robin,
            omega0: T::c(0.9),
            r_s0: None,
            phi_s0: T::zero(),
        }
    }
}

impl<T: Real> CanmConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= T::c(1e-12) && self.epsilon <= T::c(1e-8)) {
            return Err(Error::InvalidParams(format!(
                "epsilon {:e} outside the accepted range [1e-12, 1e-8]",
                self.epsilon
            )));
        }
        if !(self.epsilon < self.freeze_threshold) {
            return Err(Error::InvalidParams(
                "freeze threshold must exceed epsilon".into(),
            ));
        }
        if !(self.tau_min > T::zero() && self.tau_min < T::one()) {
            return Err(Error::InvalidParams("tau_min must lie in (0, 1)".into()));
        }
        if self.cells_inner < 2 || self.cells_outer < 2 {
            return Err(Error::InvalidParams("need at least 2 cells per domain".into()));
        }
        if let Some(x) = self.x_inf {
            if !(x > T::one()) {
                return Err(Error::InvalidParams("x_inf must exceed 1".into()));
            }
        }
        if !(self.r_max > T::zero()) {
            return Err(Error::InvalidParams("r_max must be positive".into()));
        }
        if !(self.omega0 > T::zero() && self.omega0 < T::one()) {
            return Err(Error::InvalidParams("omega0 must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FullNewton,
    FrozenJacobian,
}

/// The iterate: grid functions on both domains plus the spectral unknowns.
#[derive(Debug, Clone)]
pub struct IterationState<T> {
    pub inner: HermiteGridFunction<T>,
    pub outer: HermiteGridFunction<T>,
    pub spectral: SpectralTriple<T>,
    pub k: usize,
    pub delta: T,
    pub mode: Mode,
}

/// Composed Newton increments of one iteration.
#[derive(Debug, Clone)]
pub struct Increments<T> {
    pub z_inner: HermiteGridFunction<T>,
    pub z_outer: HermiteGridFunction<T>,
    pub d_r: T,
    pub d_omega: T,
    pub d_phi_s: T,
}

/// The s/u/v/w decomposition of one step, for inspection and tests.
#[derive(Debug, Clone)]
pub struct StepPieces<T> {
    pub s_inner: HermiteGridFunction<T>,
    pub u_inner: HermiteGridFunction<T>,
    pub v_inner: Option<HermiteGridFunction<T>>,
    pub w_inner: HermiteGridFunction<T>,
    pub s_outer: HermiteGridFunction<T>,
    pub u_outer: HermiteGridFunction<T>,
    pub v_outer: Option<HermiteGridFunction<T>>,
    pub w_outer: HermiteGridFunction<T>,
    /// Matching matrix, row-major n_spec x n_spec.
    pub matching: Vec<T>,
    /// Matching right-hand side -(delta_y + delta_s).
    pub matching_rhs: Vec<T>,
    /// Conditioning proxy of the matching solve.
    pub matching_cond: T,
}

pub struct CanmStep<T> {
    pub increments: Increments<T>,
    /// Combined inner+outer defect norm of the current iterate.
    pub delta_f: T,
    pub pieces: StepPieces<T>,
}

struct FrozenCache<T> {
    fs_inner: FactoredSystem<T>,
    fs_outer: FactoredSystem<T>,
    u_inner: HermiteGridFunction<T>,
    v_inner: Option<HermiteGridFunction<T>>,
    w_inner: HermiteGridFunction<T>,
    u_outer: HermiteGridFunction<T>,
    v_outer: Option<HermiteGridFunction<T>>,
    w_outer: HermiteGridFunction<T>,
}

/// Per-solve context: layout, meshes and the frozen-regime cache.
pub struct CanmWorkspace<T> {
    params: ModelParams<T>,
    cfg: CanmConfig<T>,
    layout: &'static Layout,
    mesh_inner: Arc<Mesh<T>>,
    mesh_outer: Arc<Mesh<T>>,
    frozen: Option<FrozenCache<T>>,
    pub factorizations: usize,
}

impl<T: Real> CanmWorkspace<T> {
    pub fn new(
        params: ModelParams<T>,
        cfg: CanmConfig<T>,
        state: &IterationState<T>,
    ) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let layout = Layout::for_mixed(state.spectral.omega.is_some());
        if state.inner.dim() != layout.n_inner || state.outer.dim() != layout.n_outer {
            return Err(Error::Dimension(
                "iteration state dimensions do not match the solver variant".into(),
            ));
        }
        Ok(Self {
            params,
            cfg,
            layout,
            mesh_inner: state.inner.mesh().clone(),
            mesh_outer: state.outer.mesh().clone(),
            frozen: None,
            factorizations: 0,
        })
    }

    pub fn x_inf(&self) -> T {
        self.mesh_outer.b()
    }

    fn bc_struct_inner(&self) -> (Vec<BcRow<T>>, Vec<BcRow<T>>) {
        let lay = self.layout;
        let mut left = vec![BcRow::dirichlet(L_LAMBDA), BcRow::dirichlet(L_XI)];
        if lay.mixed {
            left.push(BcRow::dirichlet(L_SIGMA));
            left.push(BcRow::dirichlet(L_ETA));
        }
        left.push(BcRow::dirichlet(lay.mu_inner));
        // Mixed: phi(1) = phi_s and the free-boundary row mu(1) = 0. Pure
        // fermion: mu(1) = 0 lives in the matching system and the interface
        // value of nu takes the second boundary row (see layout::MatchRow).
        let right = if lay.mixed {
            vec![BcRow::dirichlet(L_PHI), BcRow::dirichlet(lay.mu_inner)]
        } else {
            vec![BcRow::dirichlet(L_PHI), BcRow::dirichlet(L_NU)]
        };
        (left, right)
    }

    fn bc_struct_outer(&self, state: &IterationState<T>) -> (Vec<BcRow<T>>, Vec<BcRow<T>>) {
        let lay = self.layout;
        let mut left = vec![BcRow::dirichlet(L_LAMBDA), BcRow::dirichlet(L_PHI)];
        if lay.mixed {
            left.push(BcRow::dirichlet(L_SIGMA));
        }
        let nu_row = match self.cfg.far_field {
            FarField::Dirichlet => BcRow::dirichlet(L_NU),
            FarField::Robin => {
                // Linearization of nu + ln(1 + x nu_x) = 0 at the iterate.
                let last = state.outer.n_nodes() - 1;
                let x = self.x_inf();
                let m = state.outer.deriv(last, L_NU);
                let denom = (T::one() + x * m).max(T::c(1e-6));
                BcRow { comp: L_NU, value_coeff: T::one(), deriv_coeff: x / denom }
            }
        };
        let mut right = vec![nu_row, BcRow::dirichlet(L_PHI)];
        if lay.mixed {
            right.push(BcRow::dirichlet(L_SIGMA));
        }
        (left, right)
    }

    /// Boundary residuals of the full nonlinear problem at a (possibly
    /// trial) iterate, ordered (inner left, inner right, outer left,
    /// outer right) matching the BC row structure. The s-problem boundary
    /// data are the negatives of these.
    fn bc_residuals(
        &self,
        inner: &HermiteGridFunction<T>,
        outer: &HermiteGridFunction<T>,
        spectral: &SpectralTriple<T>,
    ) -> (Vec<T>, Vec<T>, Vec<T>, Vec<T>) {
        let lay = self.layout;
        let p = &self.params;
        let last_i = inner.n_nodes() - 1;
        let last_e = outer.n_nodes() - 1;

        let mut il = vec![inner.value(0, L_LAMBDA), inner.value(0, L_XI)];
        if lay.mixed {
            il.push(inner.value(0, L_SIGMA) - p.sigma_c);
            il.push(inner.value(0, L_ETA));
        }
        il.push(inner.value(0, lay.mu_inner) - p.mu_c);

        let ir = if lay.mixed {
            vec![
                inner.value(last_i, L_PHI) - spectral.phi_s,
                inner.value(last_i, lay.mu_inner),
            ]
        } else {
            vec![
                inner.value(last_i, L_PHI) - spectral.phi_s,
                inner.value(last_i, L_NU) - outer.value(0, L_NU),
            ]
        };

        let mut el = vec![
            outer.value(0, L_LAMBDA) - inner.value(last_i, L_LAMBDA),
            outer.value(0, L_PHI) - spectral.phi_s,
        ];
        if lay.mixed {
            el.push(outer.value(0, L_SIGMA) - inner.value(last_i, L_SIGMA));
        }

        let nu_res = match self.cfg.far_field {
            FarField::Dirichlet => outer.value(last_e, L_NU),
            FarField::Robin => {
                let x = self.x_inf();
                let m = outer.deriv(last_e, L_NU);
                let arg = (T::one() + x * m).max(T::c(1e-6));
                outer.value(last_e, L_NU) + arg.ln()
            }
        };
        let mut er = vec![nu_res, outer.value(last_e, L_PHI)];
        if lay.mixed {
            er.push(outer.value(last_e, L_SIGMA));
        }
        (il, ir, el, er)
    }

    /// Combined inner+outer defect norm (mesh-weighted discrete L2 of the
    /// first-order defect plus the boundary residuals).
    pub fn delta_f(
        &self,
        inner: &HermiteGridFunction<T>,
        outer: &HermiteGridFunction<T>,
        spectral: &SpectralTriple<T>,
    ) -> Result<T> {
        let lay = self.layout;
        let p = self.params;
        let r_s = spectral.r_s;
        let om = spectral.omega_or_zero();
        let (sum_i, len_i) = defect_sumsq(inner, r_s, |x, y, out| {
            lay.rhs_inner(x, y, r_s, om, &p, out)
        })?;
        let (sum_e, len_e) = defect_sumsq(outer, r_s, |x, y, out| {
            lay.rhs_outer(x, y, r_s, om, &p, out)
        })?;
        let (il, ir, el, er) = self.bc_residuals(inner, outer, spectral);
        let bc: T = il
            .iter()
            .chain(ir.iter())
            .chain(el.iter())
            .chain(er.iter())
            .fold(T::zero(), |acc, r| acc + *r * *r);
        Ok(((sum_i + sum_e + bc) / (len_i + len_e)).sqrt())
    }

    /// One CANM linearization: the four linear BVPs per domain, the matching
    /// system and the composed increments.
    pub fn canm_step(&mut self, state: &IterationState<T>) -> Result<CanmStep<T>> {
        let lay = self.layout;
        let p = self.params;
        let n_i = lay.n_inner;
        let n_e = lay.n_outer;
        let r_s = state.spectral.r_s;
        let om = state.spectral.omega_or_zero();
        let (il_res, ir_res, el_res, er_res) = self.bc_residuals(&state.inner, &state.outer, &state.spectral);

        // Boundary data per problem: s carries the negated residuals, w the
        // phi_s sensitivity (+1 in the phi slot), u and v are homogeneous.
        let neg = |v: &[T]| v.iter().map(|r| -*r).collect::<Vec<T>>();
        let s_il = neg(&il_res);
        let s_ir = neg(&ir_res);
        let s_el = neg(&el_res);
        let s_er = neg(&er_res);
        let zeros_il = vec![T::zero(); s_il.len()];
        let zeros_ir = vec![T::zero(); s_ir.len()];
        let zeros_el = vec![T::zero(); s_el.len()];
        let zeros_er = vec![T::zero(); s_er.len()];
        let mut w_ir = zeros_ir.clone();
        w_ir[0] = T::one(); // phi row of the inner right BC
        let mut w_el = zeros_el.clone();
        w_el[1] = T::one(); // phi row of the outer left BC

        // Right-hand-side callbacks.
        let inner_grid = &state.inner;
        let outer_grid = &state.outer;
        let rhs_s_i = move |x: T, out: &mut [T]| -> Result<()> {
            let mut vals = vec![T::zero(); n_i];
            let mut ders = vec![T::zero(); n_i];
            inner_grid.evaluate_into(x, &mut vals, &mut ders)?;
            let mut f = vec![T::zero(); n_i];
            lay.rhs_inner(x, &vals, r_s, om, &p, &mut f)?;
            for c in 0..n_i {
                out[c] = ders[c] - r_s * f[c];
            }
            Ok(())
        };
        let rhs_u_i = move |x: T, out: &mut [T]| -> Result<()> {
            let mut vals = vec![T::zero(); n_i];
            let mut ders = vec![T::zero(); n_i];
            inner_grid.evaluate_into(x, &mut vals, &mut ders)?;
            let mut f = vec![T::zero(); n_i];
            lay.rhs_inner(x, &vals, r_s, om, &p, &mut f)?;
            let mut q = vec![T::zero(); n_i * n_i];
            let mut d_rs = vec![T::zero(); n_i];
            let mut d_om = vec![T::zero(); n_i];
            lay.jac_inner(x, &vals, r_s, om, &p, &mut q, &mut d_rs, &mut d_om)?;
            for c in 0..n_i {
                out[c] = -(f[c] + r_s * d_rs[c]);
            }
            Ok(())
        };
        let rhs_v_i = move |x: T, out: &mut [T]| -> Result<()> {
            let mut vals = vec![T::zero(); n_i];
            let mut ders = vec![T::zero(); n_i];
            inner_grid.evaluate_into(x, &mut vals, &mut ders)?;
            let mut q = vec![T::zero(); n_i * n_i];
            let mut d_rs = vec![T::zero(); n_i];
            let mut d_om = vec![T::zero(); n_i];
            lay.jac_inner(x, &vals, r_s, om, &p, &mut q, &mut d_rs, &mut d_om)?;
            for c in 0..n_i {
                out[c] = -r_s * d_om[c];
            }
            Ok(())
        };
        let rhs_zero_i = |_x: T, out: &mut [T]| -> Result<()> {
            for v in out.iter_mut() {
                *v = T::zero();
            }
            Ok(())
        };
        let rhs_s_e = move |x: T, out: &mut [T]| -> Result<()> {
            let mut vals = vec![T::zero(); n_e];
            let mut ders = vec![T::zero(); n_e];
            outer_grid.evaluate_into(x, &mut vals, &mut ders)?;
            let mut f = vec![T::zero(); n_e];
            lay.rhs_outer(x, &vals, r_s, om, &p, &mut f)?;
            for c in 0..n_e {
                out[c] = ders[c] - r_s * f[c];
            }
            Ok(())
        };
        let rhs_u_e = move |x: T, out: &mut [T]| -> Result<()> {
            let mut vals = vec![T::zero(); n_e];
            let mut ders = vec![T::zero(); n_e];
            outer_grid.evaluate_into(x, &mut vals, &mut ders)?;
            let mut f = vec![T::zero(); n_e];
            lay.rhs_outer(x, &vals, r_s, om, &p, &mut f)?;
            let mut q = vec![T::zero(); n_e * n_e];
            let mut d_rs = vec![T::zero(); n_e];
            let mut d_om = vec![T::zero(); n_e];
            lay.jac_outer(x, &vals, r_s, om, &p, &mut q, &mut d_rs, &mut d_om)?;
            for c in 0..n_e {
                out[c] = -(f[c] + r_s * d_rs[c]);
            }
            Ok(())
        };
        let rhs_v_e = move |x: T, out: &mut [T]| -> Result<()> {
            let mut vals = vec![T::zero(); n_e];
            let mut ders = vec![T::zero(); n_e];
            outer_grid.evaluate_into(x, &mut vals, &mut ders)?;
            let mut q = vec![T::zero(); n_e * n_e];
            let mut d_rs = vec![T::zero(); n_e];
            let mut d_om = vec![T::zero(); n_e];
            lay.jac_outer(x, &vals, r_s, om, &p, &mut q, &mut d_rs, &mut d_om)?;
            for c in 0..n_e {
                out[c] = -r_s * d_om[c];
            }
            Ok(())
        };
        let rhs_zero_e = |_x: T, out: &mut [T]| -> Result<()> {
            for v in out.iter_mut() {
                *v = T::zero();
            }
            Ok(())
        };

        let use_frozen = state.mode == Mode::FrozenJacobian && self.frozen.is_some();
        let (s_i, u_i, v_i, w_i, s_e, u_e, v_e, w_e) = if use_frozen {
            let cache = self.frozen.as_ref().unwrap();
            let s_i = cache.fs_inner.solve_one(&Problem {
                rhs: &rhs_s_i,
                left_data: &s_il,
                right_data: &s_ir,
            })?;
            let s_e = cache.fs_outer.solve_one(&Problem {
                rhs: &rhs_s_e,
                left_data: &s_el,
                right_data: &s_er,
            })?;
            (
                s_i,
                cache.u_inner.clone(),
                cache.v_inner.clone(),
                cache.w_inner.clone(),
                s_e,
                cache.u_outer.clone(),
                cache.v_outer.clone(),
                cache.w_outer.clone(),
            )
        } else {
            // Fresh linearization of both domains.
            let q_i = move |x: T, out: &mut [T]| -> Result<()> {
                let mut vals = vec![T::zero(); n_i];
                let mut ders = vec![T::zero(); n_i];
                inner_grid.evaluate_into(x, &mut vals, &mut ders)?;
                let mut d_rs = vec![T::zero(); n_i];
                let mut d_om = vec![T::zero(); n_i];
                lay.jac_inner(x, &vals, r_s, om, &p, out, &mut d_rs, &mut d_om)?;
                for v in out.iter_mut() {
                    *v = r_s * *v;
                }
                Ok(())
            };
            let q_e = move |x: T, out: &mut [T]| -> Result<()> {
                let mut vals = vec![T::zero(); n_e];
                let mut ders = vec![T::zero(); n_e];
                outer_grid.evaluate_into(x, &mut vals, &mut ders)?;
                let mut d_rs = vec![T::zero(); n_e];
                let mut d_om = vec![T::zero(); n_e];
                lay.jac_outer(x, &vals, r_s, om, &p, out, &mut d_rs, &mut d_om)?;
                for v in out.iter_mut() {
                    *v = r_s * *v;
                }
                Ok(())
            };
            let (bc_il, bc_ir) = self.bc_struct_inner();
            let bvp_i = LinearBvp { dim: n_i, q: &q_i, left_bc: &bc_il, right_bc: &bc_ir };
            let fs_i = assemble(&bvp_i, &self.mesh_inner)?;
            let (bc_el, bc_er) = self.bc_struct_outer(state);
            let bvp_e = LinearBvp { dim: n_e, q: &q_e, left_bc: &bc_el, right_bc: &bc_er };
            let fs_e = assemble(&bvp_e, &self.mesh_outer)?;
            self.factorizations += 2;

            let s_i = fs_i.solve_one(&Problem { rhs: &rhs_s_i, left_data: &s_il, right_data: &s_ir })?;
            let u_i = fs_i.solve_one(&Problem { rhs: &rhs_u_i, left_data: &zeros_il, right_data: &zeros_ir })?;
            let v_i = if lay.mixed {
                Some(fs_i.solve_one(&Problem {
                    rhs: &rhs_v_i,
                    left_data: &zeros_il,
                    right_data: &zeros_ir,
                })?)
            } else {
                None
            };
            let w_i = fs_i.solve_one(&Problem { rhs: &rhs_zero_i, left_data: &zeros_il, right_data: &w_ir })?;
            let s_e = fs_e.solve_one(&Problem { rhs: &rhs_s_e, left_data: &s_el, right_data: &s_er })?;
            let u_e = fs_e.solve_one(&Problem { rhs: &rhs_u_e, left_data: &zeros_el, right_data: &zeros_er })?;
            let v_e = if lay.mixed {
                Some(fs_e.solve_one(&Problem {
                    rhs: &rhs_v_e,
                    left_data: &zeros_el,
                    right_data: &zeros_er,
                })?)
            } else {
                None
            };
            let w_e = fs_e.solve_one(&Problem { rhs: &rhs_zero_e, left_data: &w_el, right_data: &zeros_er })?;

            self.frozen = Some(FrozenCache {
                fs_inner: fs_i,
                fs_outer: fs_e,
                u_inner: u_i.clone(),
                v_inner: v_i.clone(),
                w_inner: w_i.clone(),
                u_outer: u_e.clone(),
                v_outer: v_e.clone(),
                w_outer: w_e.clone(),
            });
            (s_i, u_i, v_i, w_i, s_e, u_e, v_e, w_e)
        };

        // Matching system: interface continuity traces (and, pure fermion,
        // the free-boundary trace mu_i(1)) against the spectral increments.
        let n_spec = lay.n_spec;
        let last_i = state.inner.n_nodes() - 1;
        let row_value = |kind: &MatchRow,
                         g_e: &HermiteGridFunction<T>,
                         g_i: &HermiteGridFunction<T>| match kind {
            MatchRow::Continuity(c) => g_e.value(0, *c) - g_i.value(last_i, *c),
            MatchRow::InnerSurface(c) => g_i.value(last_i, *c),
        };
        let mut matching = vec![T::zero(); n_spec * n_spec];
        let mut rhs3 = vec![T::zero(); n_spec];
        for (row, kind) in lay.match_rows.iter().enumerate() {
            matching[row * n_spec] = row_value(kind, &u_e, &u_i);
            if lay.mixed {
                matching[row * n_spec + 1] =
                    row_value(kind, v_e.as_ref().unwrap(), v_i.as_ref().unwrap());
                matching[row * n_spec + 2] = row_value(kind, &w_e, &w_i);
            } else {
                matching[row * n_spec + 1] = row_value(kind, &w_e, &w_i);
            }
            let dy = row_value(kind, &state.outer, &state.inner);
            let ds = row_value(kind, &s_e, &s_i);
            rhs3[row] = -(dy + ds);
        }
        let mut m_work = matching.clone();
        let mut sol3 = rhs3.clone();
        let matching_cond = solve_dense(&mut m_work, &mut sol3, n_spec)?;
        let (d_r, d_omega, d_phi_s) = if lay.mixed {
            (sol3[0], sol3[1], sol3[2])
        } else {
            (sol3[0], T::zero(), sol3[1])
        };

        // Compose z = s + rho u + omega v + phi w.
        let z_inner = {
            let mut terms: Vec<(T, &HermiteGridFunction<T>)> = vec![(T::one(), &s_i), (d_r, &u_i)];
            if let Some(v) = v_i.as_ref() {
                terms.push((d_omega, v));
            }
            terms.push((d_phi_s, &w_i));
            HermiteGridFunction::lin_comb(&terms)?
        };
        let z_outer = {
            let mut terms: Vec<(T, &HermiteGridFunction<T>)> = vec![(T::one(), &s_e), (d_r, &u_e)];
            if let Some(v) = v_e.as_ref() {
                terms.push((d_omega, v));
            }
            terms.push((d_phi_s, &w_e));
            HermiteGridFunction::lin_comb(&terms)?
        };

        let delta_f = self.delta_f(&state.inner, &state.outer, &state.spectral)?;

        Ok(CanmStep {
            increments: Increments { z_inner, z_outer, d_r, d_omega, d_phi_s },
            delta_f,
            pieces: StepPieces {
                s_inner: s_i,
                u_inner: u_i,
                v_inner: v_i,
                w_inner: w_i,
                s_outer: s_e,
                u_outer: u_e,
                v_outer: v_e,
                w_outer: w_e,
                matching,
                matching_rhs: rhs3,
                matching_cond,
            },
        })
    }

    /// The residual delta(tau): the defect norm of the trial state
    /// y + tau z together with the squared parameter increments.
    pub fn residual_delta(
        &self,
        state: &IterationState<T>,
        incr: &Increments<T>,
        tau: T,
    ) -> Result<T> {
        let (inner, outer, spectral) = self.trial_state(state, incr, tau);
        let df = self.delta_f(&inner, &outer, &spectral)?;
        Ok(delta_with_increments(df, tau, incr))
    }

    fn trial_state(
        &self,
        state: &IterationState<T>,
        incr: &Increments<T>,
        tau: T,
    ) -> (HermiteGridFunction<T>, HermiteGridFunction<T>, SpectralTriple<T>) {
        let mut inner = state.inner.clone();
        let mut outer = state.outer.clone();
        inner.axpy(tau, &incr.z_inner).expect("increment mesh mismatch");
        outer.axpy(tau, &incr.z_outer).expect("increment mesh mismatch");
        let spectral = SpectralTriple {
            r_s: state.spectral.r_s + tau * incr.d_r,
            omega: state.spectral.omega.map(|o| o + tau * incr.d_omega),
            phi_s: state.spectral.phi_s + tau * incr.d_phi_s,
        };
        (inner, outer, spectral)
    }

    fn clear_frozen(&mut self) {
        self.frozen = None;
    }
}

/// max(delta_f, (tau rho)^2, (tau omega)^2, (tau phi)^2).
fn delta_with_increments<T: Real>(delta_f: T, tau: T, incr: &Increments<T>) -> T {
    let sq = |v: T| v * v;
    delta_f
        .max(sq(tau * incr.d_r))
        .max(sq(tau * incr.d_omega))
        .max(sq(tau * incr.d_phi_s))
}

/// Ermakov-Kalitkin step: delta0 / (delta0 + delta1), clamped to
/// (tau_min, 1]. Both residuals zero means the iterate is converged and the
/// full step is returned.
pub fn optimal_tau<T: Real>(delta0: T, delta1: T, tau_min: T) -> T {
    if !(delta0 > T::zero()) {
        return T::one();
    }
    let tau = delta0 / (delta0 + delta1);
    tau.min(T::one()).max(tau_min)
}

/// Decay envelope exp(-k R_s (x - 1)) / x used to continue tails past a
/// previous truncation boundary.
fn tail_envelope<T: Real>(k: T, r_s: T, x: T) -> T {
    (-k * r_s * (x - T::one())).exp() / x
}

/// Uniform interior mesh on [0, 1] and a geometrically graded exterior mesh
/// on [1, x_inf] whose first cell matches half the interior spacing.
fn build_domain_meshes<T: Real>(
    cfg: &CanmConfig<T>,
    x_inf: T,
) -> Result<(Arc<Mesh<T>>, Arc<Mesh<T>>)> {
    if !(x_inf > T::c(1.05)) {
        return Err(Error::InvalidParams(format!(
            "outer truncation x_inf = {x_inf} too close to the star surface"
        )));
    }
    let mesh_i = Arc::new(build_mesh(T::zero(), T::one(), cfg.cells_inner, Grading::Uniform)?);
    let len = x_inf - T::one();
    let h_uniform = len / T::from_usize(cfg.cells_outer).unwrap();
    let h0_target = (T::c(0.5) / T::from_usize(cfg.cells_inner).unwrap()).min(h_uniform);
    let grading = if h0_target >= h_uniform * T::c(0.999) {
        Grading::Uniform
    } else {
        let ratio = geometric_ratio_for_first_cell(len, cfg.cells_outer, h0_target)?;
        Grading::GeometricTowardLeft { ratio }
    };
    let mesh_e = Arc::new(build_mesh(T::one(), x_inf, cfg.cells_outer, grading)?);
    Ok((mesh_i, mesh_e))
}

/// Project a converged solution onto new meshes: plain re-evaluation where
/// the domains overlap, vacuum/decay tail models beyond the old truncation.
fn project_state<T: Real>(
    sol: &Solution<T>,
    params: &ModelParams<T>,
    mesh_inner: Arc<Mesh<T>>,
    mesh_outer: Arc<Mesh<T>>,
    layout: &Layout,
) -> Result<IterationState<T>> {
    let n_i = layout.n_inner;
    let n_e = layout.n_outer;
    let mut inner = HermiteGridFunction::zeros(mesh_inner.clone(), n_i);
    let mut vals = vec![T::zero(); n_i];
    let mut ders = vec![T::zero(); n_i];
    for (j, &x) in mesh_inner.nodes().iter().enumerate() {
        sol.inner.evaluate_into(x, &mut vals, &mut ders)?;
        for c in 0..n_i {
            inner.set_value(j, c, vals[c]);
            inner.set_deriv(j, c, ders[c]);
        }
    }

    let r_s = sol.spectral.r_s;
    let b_old = sol.outer.mesh().b();
    let last = sol.outer.n_nodes() - 1;
    let gamma = params.gamma;
    let k_sigma = match sol.spectral.omega {
        Some(om) if om < T::one() => (T::one() - om * om).sqrt(),
        _ => T::one(),
    };
    let lam_end = sol.outer.value(last, L_LAMBDA);
    let nu_end = sol.outer.value(last, L_NU);
    let phi_end = sol.outer.value(last, L_PHI);
    let sig_end = if layout.mixed { sol.outer.value(last, L_SIGMA) } else { T::zero() };

    let mut outer = HermiteGridFunction::zeros(mesh_outer.clone(), n_e);
    let mut vals_e = vec![T::zero(); n_e];
    let mut ders_e = vec![T::zero(); n_e];
    for (j, &x) in mesh_outer.nodes().iter().enumerate() {
        if x <= b_old {
            sol.outer.evaluate_into(x, &mut vals_e, &mut ders_e)?;
            for c in 0..n_e {
                outer.set_value(j, c, vals_e[c]);
                outer.set_deriv(j, c, ders_e[c]);
            }
        } else {
            // Vacuum 1/r tails for the metric, decay envelopes for the fields.
            let lam = lam_end * b_old / x;
            let nu = nu_end * b_old / x;
            let phi = phi_end * tail_envelope(gamma, r_s, x) / tail_envelope(gamma, r_s, b_old);
            let xi = phi * (-gamma - T::one() / (r_s * x));
            outer.set_value(j, L_LAMBDA, lam);
            outer.set_deriv(j, L_LAMBDA, -lam / x);
            outer.set_value(j, L_NU, nu);
            outer.set_deriv(j, L_NU, -nu / x);
            outer.set_value(j, L_PHI, phi);
            outer.set_deriv(j, L_PHI, r_s * xi);
            outer.set_value(j, L_XI, xi);
            outer.set_deriv(
                j,
                L_XI,
                r_s * (xi * (-gamma - T::one() / (r_s * x))
                    + phi / (r_s * x * x * r_s)),
            );
            if layout.mixed {
                let sig =
                    sig_end * tail_envelope(k_sigma, r_s, x) / tail_envelope(k_sigma, r_s, b_old);
                let eta = sig * (-k_sigma - T::one() / (r_s * x));
                outer.set_value(j, L_SIGMA, sig);
                outer.set_deriv(j, L_SIGMA, r_s * eta);
                outer.set_value(j, L_ETA, eta);
                outer.set_deriv(
                    j,
                    L_ETA,
                    r_s * (eta * (-k_sigma - T::one() / (r_s * x))
                        + sig / (r_s * x * x * r_s)),
                );
            }
        }
    }
    Ok(IterationState {
        inner,
        outer,
        spectral: sol.spectral,
        k: 0,
        delta: T::infinity(),
        mode: Mode::FullNewton,
    })
}

/// Default-ansatz or warm-started iterate.
///
/// Default: flat metric, Gaussian boson profile with the star-radius decay
/// scale, parabolic Fermi momentum, zero dilaton, Omega0 = 0.9 and the
/// low-density polytrope radius estimate. A warm override reproduces the
/// given solution exactly when its meshes are compatible with the
/// configuration, and is projected onto the configured meshes otherwise.
pub fn initial_guess<T: Real>(
    params: &ModelParams<T>,
    cfg: &CanmConfig<T>,
    warm: Option<&Solution<T>>,
    mixed: bool,
) -> Result<IterationState<T>> {
    let layout = Layout::for_mixed(mixed);
    if let Some(sol) = warm {
        if sol.is_pure_fermion() == mixed {
            return Err(Error::InvalidParams(
                "warm-start solution variant does not match the requested solve".into(),
            ));
        }
        let cells_match = sol.inner.n_nodes() == cfg.cells_inner + 1
            && sol.outer.n_nodes() == cfg.cells_outer + 1;
        let x_inf_match = match cfg.x_inf {
            None => true,
            Some(x) => (sol.x_inf - x).abs() <= T::c(1e-9) * x,
        };
        if cells_match && x_inf_match {
            return Ok(IterationState {
                inner: sol.inner.clone(),
                outer: sol.outer.clone(),
                spectral: sol.spectral,
                k: 0,
                delta: T::infinity(),
                mode: Mode::FullNewton,
            });
        }
        let x_inf = cfg.x_inf.unwrap_or(cfg.r_max / sol.spectral.r_s);
        let (mesh_inner, mesh_outer) = build_domain_meshes(cfg, x_inf)?;
        return project_state(sol, params, mesh_inner, mesh_outer, layout);
    }

    let r_s0 = cfg.r_s0.unwrap_or_else(|| {
        // Lane-Emden n = 3/2 radius of the low-density limit of this EOS.
        T::c(3.65375) * params.mu_c.powf(-T::c(0.25)) / params.b.sqrt()
    });
    let x_inf = cfg.x_inf.unwrap_or(cfg.r_max / r_s0);
    let (mesh_i, mesh_e) = build_domain_meshes(cfg, x_inf)?;

    let sigma_c = params.sigma_c;
    let mu_c = params.mu_c;
    let gamma = params.gamma;
    let phi_s0 = cfg.phi_s0;
    let two = T::c(2.0);

    // sigma(r) = sigma_c exp(-(r/R_s0)^2) = sigma_c exp(-x^2) in both domains.
    let sig = move |x: T| sigma_c * (-x * x).exp();
    let dsig_dx = move |x: T| -two * x * sig(x);
    // phi: phi_s0 x^2 inside, exponential/power tail outside.
    let phi_in = move |x: T| phi_s0 * x * x;
    let dphi_in = move |x: T| two * phi_s0 * x;
    let phi_out = move |x: T| phi_s0 * (-gamma * r_s0 * (x - T::one())).exp() / x;
    let dphi_out = move |x: T| phi_out(x) * (-gamma * r_s0 - T::one() / x);

    let lay_i = layout.map_inner;
    let inner = HermiteGridFunction::from_fns(
        mesh_i,
        layout.n_inner,
        |c, x| match lay_i[c] {
            2 => phi_in(x),
            3 => dphi_in(x) / r_s0,
            4 => sig(x),
            5 => dsig_dx(x) / r_s0,
            6 => mu_c * (T::one() - x * x),
            _ => T::zero(),
        },
        |c, x| match lay_i[c] {
            2 => dphi_in(x),
            3 => two * phi_s0 / r_s0,
            4 => dsig_dx(x),
            5 => (-two * sig(x) - two * x * dsig_dx(x)) / r_s0,
            6 => -two * mu_c * x,
            _ => T::zero(),
        },
    );
    let lay_e = layout.map_outer;
    let outer = HermiteGridFunction::from_fns(
        mesh_e,
        layout.n_outer,
        |c, x| match lay_e[c] {
            2 => phi_out(x),
            3 => dphi_out(x) / r_s0,
            4 => sig(x),
            5 => dsig_dx(x) / r_s0,
            _ => T::zero(),
        },
        |c, x| match lay_e[c] {
            2 => dphi_out(x),
            3 => (dphi_out(x) * (-gamma * r_s0 - T::one() / x)
                + phi_out(x) / (x * x))
                / r_s0,
            4 => dsig_dx(x),
            5 => (-two * sig(x) - two * x * dsig_dx(x)) / r_s0,
            _ => T::zero(),
        },
    );
    let spectral = if mixed {
        SpectralTriple::mixed(r_s0, cfg.omega0, phi_s0)
    } else {
        SpectralTriple::pure_fermion(r_s0, phi_s0)
    };
    Ok(IterationState { inner, outer, spectral, k: 0, delta: T::infinity(), mode: Mode::FullNewton })
}

/// Solve a mixed boson-fermion configuration.
pub fn solve<T: Real>(
    params: &ModelParams<T>,
    cfg: &CanmConfig<T>,
    guess: Option<&Solution<T>>,
) -> Result<Solution<T>> {
    params.validate()?;
    if !(params.sigma_c > T::zero()) {
        return Err(Error::InvalidParams(
            "sigma_c = 0 is the pure-fermion degeneration; use pure_fermion_solve".into(),
        ));
    }
    drive(params, cfg, guess, true)
}

/// Solve the pure-fermion degeneration (sigma identically zero, Omega
/// removed from the unknowns, 2x2 matching over the (nu, xi) traces).
pub fn pure_fermion_solve<T: Real>(
    params: &ModelParams<T>,
    cfg: &CanmConfig<T>,
    guess: Option<&Solution<T>>,
) -> Result<Solution<T>> {
    if params.sigma_c != T::zero() {
        return Err(Error::InvalidParams("pure_fermion_solve requires sigma_c = 0 exactly".into()));
    }
    let mut p = *params;
    p.sigma_c = T::zero();
    p.validate()?;
    drive(&p, cfg, guess, false)
}

/// Staged driver: solve on the initial meshes, and if the realized outer
/// radius R_s * X_inf missed the configured r_max by more than 20% (the
/// initial radius estimate was off), rebuild the domain at the converged
/// radius and re-solve warm-started. Explicit `x_inf` disables restaging.
fn drive<T: Real>(
    params: &ModelParams<T>,
    cfg: &CanmConfig<T>,
    guess: Option<&Solution<T>>,
    mixed: bool,
) -> Result<Solution<T>> {
    cfg.validate()?;
    let mut warm: Option<Solution<T>> = guess.cloned();
    let mut merged_log: Vec<IterationRecord<T>> = Vec::new();
    let mut merged_warnings: Vec<String> = Vec::new();
    let mut merged_iterations = 0usize;
    let mut merged_factorizations = 0usize;
    let mut cfg_stage = cfg.clone();
    for stage in 0..3 {
        let mut sol = drive_once(params, &cfg_stage, warm.as_ref(), mixed)?;
        merged_iterations += sol.report.iterations;
        merged_factorizations += sol.report.factorizations;
        let offset = merged_log.len();
        merged_log.extend(sol.report.iteration_log.iter().map(|r| IterationRecord {
            k: r.k + offset,
            ..*r
        }));
        merged_warnings.append(&mut sol.report.warnings);
        let r_max_actual = sol.x_inf * sol.spectral.r_s;
        let retarget = cfg.x_inf.is_none()
            && stage < 2
            && (r_max_actual - cfg.r_max).abs() > T::c(0.2) * cfg.r_max;
        if !retarget {
            sol.report.iterations = merged_iterations;
            sol.report.factorizations = merged_factorizations;
            sol.report.iteration_log = merged_log;
            sol.report.warnings = merged_warnings;
            return Ok(sol);
        }
        cfg_stage.x_inf = Some(cfg.r_max / sol.spectral.r_s);
        warm = Some(sol);
    }
    unreachable!("staged drive always returns within three stages");
}

fn drive_once<T: Real>(
    params: &ModelParams<T>,
    cfg: &CanmConfig<T>,
    guess: Option<&Solution<T>>,
    mixed: bool,
) -> Result<Solution<T>> {
    let mut state = initial_guess(params, cfg, guess, mixed)?;
    let mut ws = CanmWorkspace::new(*params, cfg.clone(), &state)?;

    let mut log: Vec<IterationRecord<T>> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut froze_at: Option<usize> = None;
    let mut converged = false;
    let mut final_delta = T::infinity();
    let mut history: Vec<f64> = Vec::new();
    let mut prev_delta = T::infinity();
    let mut omega_warned = false;

    for k in 0..cfg.max_iter {
        let step = match ws.canm_step(&state) {
            Ok(s) => s,
            Err(
                e @ (Error::SingularFactorization { .. } | Error::SingularMatching { .. }),
            ) => {
                // Ill-posedness in the vicinity of the solution: accept if
                // the residual already meets the termination criterion.
                if state.delta < cfg.epsilon {
                    converged = true;
                    final_delta = state.delta;
                    warnings.push(format!("terminated on ill-conditioned linearization: {e}"));
                    break;
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let delta0 = step.delta_f;
        if delta0 < cfg.epsilon {
            converged = true;
            final_delta = delta0;
            break;
        }
        let delta1 = ws.residual_delta(&state, &step.increments, T::one())?;
        let mut tau = optimal_tau(delta0, delta1, cfg.tau_min);
        // Trust-region-style safeguard: never move the star radius by more
        // than 30% in one iteration (runaway protection far from the root).
        let dr = step.increments.d_r.abs();
        if dr > T::zero() {
            let tau_rs = T::c(0.3) * state.spectral.r_s / dr;
            if tau_rs < tau {
                tau = tau_rs.max(cfg.tau_min);
            }
        }

        state.inner.axpy(tau, &step.increments.z_inner)?;
        state.outer.axpy(tau, &step.increments.z_outer)?;
        state.spectral.r_s = state.spectral.r_s + tau * step.increments.d_r;
        state.spectral.omega = state.spectral.omega.map(|o| o + tau * step.increments.d_omega);
        state.spectral.phi_s = state.spectral.phi_s + tau * step.increments.d_phi_s;
        state.k += 1;

        if !(state.spectral.r_s > T::zero()) {
            return Err(Error::NonConvergence {
                iterations: k + 1,
                last_residual: final_delta.as_f64(),
                history,
            });
        }
        if mixed && !state.spectral.omega_in_range() && !omega_warned {
            warnings.push(format!(
                "Omega = {} drifted outside (0, 1) at iteration {}",
                state.spectral.omega_or_zero(),
                k
            ));
            omega_warned = true;
        }

        let df_new = ws.delta_f(&state.inner, &state.outer, &state.spectral)?;
        let delta_tau = delta_with_increments(df_new, tau, &step.increments);
        state.delta = delta_tau;
        final_delta = delta_tau;
        history.push(delta_tau.as_f64());
        log.push(IterationRecord {
            k,
            delta0,
            delta1,
            tau,
            delta_tau,
            frozen: state.mode == Mode::FrozenJacobian,
        });

        if delta_tau < cfg.epsilon {
            converged = true;
            break;
        }
        match state.mode {
            Mode::FullNewton => {
                if cfg.freeze_enabled && delta_tau < cfg.freeze_threshold {
                    state.mode = Mode::FrozenJacobian;
                    froze_at = Some(k);
                }
            }
            Mode::FrozenJacobian => {
                if delta_tau > prev_delta {
                    state.mode = Mode::FullNewton;
                    ws.clear_frozen();
                    warnings.push(format!(
                        "frozen-Jacobian regime stalled at iteration {k}; refactorizing"
                    ));
                }
            }
        }
        prev_delta = delta_tau;
    }

    if !converged {
        return Err(Error::NonConvergence {
            iterations: cfg.max_iter,
            last_residual: final_delta.as_f64(),
            history,
        });
    }

    let observables = observables::compute(params, &state.spectral, &state.inner, &state.outer, 1)?;
    let report = ConvergenceReport {
        converged,
        iterations: state.k,
        final_delta,
        iteration_log: log,
        froze_at,
        factorizations: ws.factorizations,
        warnings,
    };
    Ok(Solution {
        params: *params,
        spectral: state.spectral,
        x_inf: state.outer.mesh().b(),
        inner: state.inner,
        outer: state.outer,
        observables,
        report,
    })
}
