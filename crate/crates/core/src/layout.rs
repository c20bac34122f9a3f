//! Component layouts of the two solver variants: the mixed star (7 interior /
//! 6 exterior components, spectral unknowns R_s, Omega, phi_s) and the
//! pure-fermion degeneration (sigma and eta identically zero, Omega removed,
//! 5/4 components, spectral unknowns R_s, phi_s). Local state vectors are
//! mapped onto the full 7-component model state so all variants share the
//! model right-hand sides and Jacobians.

use crate::error::Result;
use crate::model::{self, ModelParams, DIM_INNER, DIM_OUTER};
use crate::scalar::Real;

/// Local component indices shared by both variants: lambda, nu, phi, xi are
/// always 0..=3; mu follows (after sigma and eta when present).
pub(crate) const L_LAMBDA: usize = 0;
pub(crate) const L_NU: usize = 1;
pub(crate) const L_PHI: usize = 2;
pub(crate) const L_XI: usize = 3;
pub(crate) const L_SIGMA: usize = 4;
pub(crate) const L_ETA: usize = 5;

/// One row of the matching system determining the spectral increments.
///
/// `Continuity(c)` matches component `c` across the interface
/// (h_e(1) - h_i(1) = 0). `InnerSurface(c)` drives the interior trace of
/// component `c` to zero (the free-boundary condition mu(1) = 0 in the
/// pure-fermion variant, where mu cannot be a boundary row of the interior
/// linear problem: with sigma identically zero nothing couples to the value
/// of nu, so nu takes the interface boundary row instead and mu(1) moves
/// into the matching system).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MatchRow {
    Continuity(usize),
    InnerSurface(usize),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub mixed: bool,
    pub n_inner: usize,
    pub n_outer: usize,
    /// Local -> global(7) component map, interior.
    pub map_inner: &'static [usize],
    /// Local -> global(7) component map, exterior.
    pub map_outer: &'static [usize],
    /// Rows of the matching system.
    pub match_rows: &'static [MatchRow],
    /// Number of spectral unknowns (3 mixed, 2 pure fermion).
    pub n_spec: usize,
    /// Local index of mu in the interior vector.
    pub mu_inner: usize,
}

pub(crate) static MIXED: Layout = Layout {
    mixed: true,
    n_inner: 7,
    n_outer: 6,
    map_inner: &[0, 1, 2, 3, 4, 5, 6],
    map_outer: &[0, 1, 2, 3, 4, 5],
    match_rows: &[
        MatchRow::Continuity(L_NU),
        MatchRow::Continuity(L_XI),
        MatchRow::Continuity(L_ETA),
    ],
    n_spec: 3,
    mu_inner: 6,
};

pub(crate) static PURE_FERMION: Layout = Layout {
    mixed: false,
    n_inner: 5,
    n_outer: 4,
    map_inner: &[0, 1, 2, 3, 6],
    map_outer: &[0, 1, 2, 3],
    match_rows: &[MatchRow::InnerSurface(4), MatchRow::Continuity(L_XI)],
    n_spec: 2,
    mu_inner: 4,
};

impl Layout {
    pub(crate) fn for_mixed(mixed: bool) -> &'static Layout {
        if mixed {
            &MIXED
        } else {
            &PURE_FERMION
        }
    }

    fn embed_inner<T: Real>(&self, y: &[T]) -> [T; DIM_INNER] {
        let mut full = [T::zero(); DIM_INNER];
        for (l, &g) in self.map_inner.iter().enumerate() {
            full[g] = y[l];
        }
        full
    }

    fn embed_outer<T: Real>(&self, y: &[T]) -> [T; DIM_OUTER] {
        let mut full = [T::zero(); DIM_OUTER];
        for (l, &g) in self.map_outer.iter().enumerate() {
            full[g] = y[l];
        }
        full
    }

    pub(crate) fn rhs_inner<T: Real>(
        &self,
        x: T,
        y: &[T],
        r_s: T,
        omega: T,
        params: &ModelParams<T>,
        out: &mut [T],
    ) -> Result<()> {
        let full = self.embed_inner(y);
        let f = model::rhs_inner(x, &full, r_s, omega, params)?;
        for (l, &g) in self.map_inner.iter().enumerate() {
            out[l] = f[g];
        }
        Ok(())
    }

    pub(crate) fn rhs_outer<T: Real>(
        &self,
        x: T,
        y: &[T],
        r_s: T,
        omega: T,
        params: &ModelParams<T>,
        out: &mut [T],
    ) -> Result<()> {
        let full = self.embed_outer(y);
        let f = model::rhs_outer(x, &full, r_s, omega, params)?;
        for (l, &g) in self.map_outer.iter().enumerate() {
            out[l] = f[g];
        }
        Ok(())
    }

    /// Local Jacobian blocks: `q` is row-major n x n, `d_rs` and `d_om` are
    /// n-vectors (n = n_inner).
    pub(crate) fn jac_inner<T: Real>(
        &self,
        x: T,
        y: &[T],
        r_s: T,
        omega: T,
        params: &ModelParams<T>,
        q: &mut [T],
        d_rs: &mut [T],
        d_om: &mut [T],
    ) -> Result<()> {
        let full = self.embed_inner(y);
        let (qf, drs, dom) = model::jacobians_inner(x, &full, r_s, omega, params)?;
        let n = self.n_inner;
        for (lr, &gr) in self.map_inner.iter().enumerate() {
            for (lc, &gc) in self.map_inner.iter().enumerate() {
                q[lr * n + lc] = qf[gr][gc];
            }
            d_rs[lr] = drs[gr];
            d_om[lr] = dom[gr];
        }
        Ok(())
    }

    pub(crate) fn jac_outer<T: Real>(
        &self,
        x: T,
        y: &[T],
        r_s: T,
        omega: T,
        params: &ModelParams<T>,
        q: &mut [T],
        d_rs: &mut [T],
        d_om: &mut [T],
    ) -> Result<()> {
        let full = self.embed_outer(y);
        let (qf, drs, dom) = model::jacobians_outer(x, &full, r_s, omega, params)?;
        let n = self.n_outer;
        for (lr, &gr) in self.map_outer.iter().enumerate() {
            for (lc, &gc) in self.map_outer.iter().enumerate() {
                q[lr * n + lc] = qf[gr][gc];
            }
            d_rs[lr] = drs[gr];
            d_om[lr] = dom[gr];
        }
        Ok(())
    }

    /// Unpack a local interior state into (lambda, nu, phi, xi, sigma, eta, mu).
    pub(crate) fn unpack_inner<T: Real>(&self, y: &[T]) -> (T, T, T, T, T, T, T) {
        let full = self.embed_inner(y);
        (full[0], full[1], full[2], full[3], full[4], full[5], full[6])
    }

    /// Unpack a local exterior state into (lambda, nu, phi, xi, sigma, eta).
    pub(crate) fn unpack_outer<T: Real>(&self, y: &[T]) -> (T, T, T, T, T, T) {
        let full = self.embed_outer(y);
        (full[0], full[1], full[2], full[3], full[4], full[5])
    }
}
