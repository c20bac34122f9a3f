//! C1 piecewise-cubic vector grid functions: per-node values and first
//! derivatives of each solution component, with Hermite evaluation between
//! nodes.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::mesh::Mesh;

#[derive(Debug, Clone)]
pub struct HermiteGridFunction<T> {
    mesh: Arc<Mesh<T>>,
    dim: usize,
    /// Nodal values, layout `[node * dim + comp]`.
    values: Vec<T>,
    /// Nodal derivatives with respect to the mesh coordinate, same layout.
    derivs: Vec<T>,
}

impl<T: Real> HermiteGridFunction<T> {
    pub fn zeros(mesh: Arc<Mesh<T>>, dim: usize) -> Self {
        let n = mesh.nodes().len();
        Self { mesh, dim, values: vec![T::zero(); n * dim], derivs: vec![T::zero(); n * dim] }
    }

    /// Build from per-component value and derivative closures of x.
    pub fn from_fns(
        mesh: Arc<Mesh<T>>,
        dim: usize,
        mut value: impl FnMut(usize, T) -> T,
        mut deriv: impl FnMut(usize, T) -> T,
    ) -> Self {
        let mut g = Self::zeros(mesh, dim);
        let nodes = g.mesh.nodes().to_vec();
        for (j, &x) in nodes.iter().enumerate() {
            for c in 0..dim {
                g.values[j * dim + c] = value(c, x);
                g.derivs[j * dim + c] = deriv(c, x);
            }
        }
        g
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.nodes().len()
    }

    #[inline]
    pub fn value(&self, node: usize, comp: usize) -> T {
        self.values[node * self.dim + comp]
    }

    #[inline]
    pub fn deriv(&self, node: usize, comp: usize) -> T {
        self.derivs[node * self.dim + comp]
    }

    #[inline]
    pub fn set_value(&mut self, node: usize, comp: usize, v: T) {
        self.values[node * self.dim + comp] = v;
    }

    #[inline]
    pub fn set_deriv(&mut self, node: usize, comp: usize, v: T) {
        self.derivs[node * self.dim + comp] = v;
    }

    /// Nodal values of one node as a slice.
    #[inline]
    pub fn node_values(&self, node: usize) -> &[T] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }

    #[inline]
    pub fn node_derivs(&self, node: usize) -> &[T] {
        &self.derivs[node * self.dim..(node + 1) * self.dim]
    }

    /// First-node component values (domain left end).
    pub fn left_values(&self) -> &[T] {
        self.node_values(0)
    }

    /// Last-node component values (domain right end).
    pub fn right_values(&self) -> &[T] {
        self.node_values(self.n_nodes() - 1)
    }

    /// Cubic Hermite evaluation; exact at nodes. Errors outside `[a, b]`.
    pub fn evaluate(&self, x: T) -> Result<(Vec<T>, Vec<T>)> {
        let mut vals = vec![T::zero(); self.dim];
        let mut ders = vec![T::zero(); self.dim];
        self.evaluate_into(x, &mut vals, &mut ders)?;
        Ok((vals, ders))
    }

    pub fn evaluate_into(&self, x: T, vals: &mut [T], ders: &mut [T]) -> Result<()> {
        if vals.len() != self.dim || ders.len() != self.dim {
            return Err(Error::Dimension("evaluate_into buffers".into()));
        }
        let j = self.mesh.locate(x)?;
        let x0 = self.mesh.nodes()[j];
        let h = self.mesh.cell_width(j);
        let th = (x - x0) / h;
        let t2 = th * th;
        let t3 = t2 * th;
        let one = T::one();
        let (h00, h10, h01, h11) = (
            one - T::c(3.0) * t2 + T::c(2.0) * t3,
            th - T::c(2.0) * t2 + t3,
            T::c(3.0) * t2 - T::c(2.0) * t3,
            t3 - t2,
        );
        let (d00, d10, d01, d11) = (
            (T::c(6.0) * t2 - T::c(6.0) * th) / h,
            one - T::c(4.0) * th + T::c(3.0) * t2,
            (T::c(6.0) * th - T::c(6.0) * t2) / h,
            T::c(3.0) * t2 - T::c(2.0) * th,
        );
        let l = j * self.dim;
        let r = (j + 1) * self.dim;
        for c in 0..self.dim {
            let (yl, ml) = (self.values[l + c], self.derivs[l + c]);
            let (yr, mr) = (self.values[r + c], self.derivs[r + c]);
            vals[c] = h00 * yl + h * h10 * ml + h01 * yr + h * h11 * mr;
            ders[c] = d00 * yl + d10 * ml + d01 * yr + d11 * mr;
        }
        Ok(())
    }

    /// In-place `self += tau * other`. Meshes and dimensions must match.
    pub fn axpy(&mut self, tau: T, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.values.len() != other.values.len() {
            return Err(Error::Dimension("axpy operand mismatch".into()));
        }
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a = *a + tau * *b;
        }
        for (a, b) in self.derivs.iter_mut().zip(other.derivs.iter()) {
            *a = *a + tau * *b;
        }
        Ok(())
    }

    /// Linear combination `sum_k coeff_k * term_k` over grid functions
    /// sharing this function's mesh and dimension.
    pub fn lin_comb(terms: &[(T, &Self)]) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::Dimension("empty lin_comb".into()))?.1;
        let mut out = Self::zeros(first.mesh.clone(), first.dim);
        for (c, t) in terms {
            out.axpy(*c, t)?;
        }
        Ok(out)
    }

    /// Max-norm over nodal values of the given component.
    pub fn max_abs_component(&self, comp: usize) -> T {
        (0..self.n_nodes()).fold(T::zero(), |m, j| m.max(self.value(j, comp).abs()))
    }

    /// Max-norm over all nodal values and derivatives.
    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .chain(self.derivs.iter())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::super::mesh::{build_mesh, Grading};
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mesh01(n: usize) -> Arc<Mesh<f64>> {
        Arc::new(build_mesh(0.0, 1.0, n, Grading::Uniform).unwrap())
    }

    #[test]
    fn node_evaluation_exact() {
        let m = mesh01(5);
        let g = HermiteGridFunction::from_fns(m.clone(), 2, |c, x| if c == 0 { x * x } else { x }, |c, _x| {
            if c == 0 {
                0.123
            } else {
                1.0
            }
        });
        for (j, &x) in m.nodes().iter().enumerate() {
            let (v, d) = g.evaluate(x).unwrap();
            assert_eq!(v[0], g.value(j, 0));
            assert_eq!(v[1], g.value(j, 1));
            assert_eq!(d[0], g.deriv(j, 0));
        }
    }

    #[test]
    fn linear_midpoint_mean() {
        let m = mesh01(4);
        let g = HermiteGridFunction::from_fns(m, 1, |_, x| 3.0 * x - 1.0, |_, _| 3.0);
        let (v, d) = g.evaluate(0.125).unwrap();
        assert_abs_diff_eq!(v[0], (g.value(0, 0) + g.value(1, 0)) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[0], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn cubic_reproduction() {
        // A cubic with consistent nodal data is reproduced everywhere.
        let p = |x: f64| 2.0 - x + 0.5 * x * x + 0.25 * x * x * x;
        let dp = |x: f64| -1.0 + x + 0.75 * x * x;
        let m = Arc::new(build_mesh(0.0, 2.0, 5, Grading::GeometricTowardLeft { ratio: 1.3 }).unwrap());
        let g = HermiteGridFunction::from_fns(m, 1, |_, x| p(x), |_, x| dp(x));
        for k in 0..=200 {
            let x = 2.0 * k as f64 / 200.0;
            let (v, d) = g.evaluate(x).unwrap();
            assert_abs_diff_eq!(v[0], p(x), epsilon = 1e-13);
            assert_abs_diff_eq!(d[0], dp(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        let g = HermiteGridFunction::zeros(mesh01(4), 1);
        assert!(g.evaluate(-0.01).is_err());
        assert!(g.evaluate(1.01).is_err());
    }
}
