//! Fourth-order Hermite-spline collocation for linear first-order ODE
//! systems `-s'(x) + Q(x) s(x) = r(x)` with separated boundary conditions.
//!
//! Unknowns are the nodal values and nodal derivatives of each component
//! (cubic C1 Hermite pieces). The ODE is collocated at every mesh node —
//! which links the derivative unknowns to the ODE — and at every cell
//! midpoint, which closes the count: `2 n (N+1)` unknowns against
//! `n (N+1) + n N` collocation rows plus `n` boundary rows. Eliminating the
//! nodal derivatives reproduces a Simpson-type two-point scheme, fourth
//! order on smooth solutions. One factorization serves any number of
//! right-hand-side/boundary-data pairs.

pub mod banded;
pub mod grid;
pub mod mesh;

use std::cell::Cell;
use std::sync::Arc;

pub use grid::HermiteGridFunction;
pub use mesh::{build_mesh, geometric_ratio_for_first_cell, Grading, Mesh};

use crate::error::{Error, Result};
use crate::scalar::Real;
use banded::{BandedLu, BandedMatrix};

thread_local! {
    static ASSEMBLY_COUNT: Cell<usize> = const { Cell::new(0) };
}

/// Number of collocation-matrix assemblies performed by this thread.
pub fn assembly_count() -> usize {
    ASSEMBLY_COUNT.with(|c| c.get())
}

/// One scalar boundary row `value_coeff * y_comp + deriv_coeff * y'_comp = data`
/// imposed at a domain end; `data` comes per problem.
#[derive(Debug, Clone, Copy)]
pub struct BcRow<T> {
    pub comp: usize,
    pub value_coeff: T,
    pub deriv_coeff: T,
}

impl<T: Real> BcRow<T> {
    pub fn dirichlet(comp: usize) -> Self {
        Self { comp, value_coeff: T::one(), deriv_coeff: T::zero() }
    }
}

/// The operator side of a linear BVP: coefficient matrix callback and the
/// boundary-condition selectors. The right-hand side and boundary data vary
/// per problem (see [`Problem`]).
pub struct LinearBvp<'a, T> {
    pub dim: usize,
    /// Fills the row-major `dim x dim` coefficient matrix Q at `x`.
    pub q: &'a dyn Fn(T, &mut [T]) -> Result<()>,
    pub left_bc: &'a [BcRow<T>],
    pub right_bc: &'a [BcRow<T>],
}

/// Right-hand side callback plus boundary data conforming to the selectors
/// the system was assembled with.
pub struct Problem<'a, T> {
    /// Fills the `dim`-vector r at `x`.
    pub rhs: &'a dyn Fn(T, &mut [T]) -> Result<()>,
    pub left_data: &'a [T],
    pub right_data: &'a [T],
}

/// Assembled and factorized collocation matrix for a fixed
/// (mesh, Q, BC-selector) combination.
pub struct FactoredSystem<T> {
    mesh: Arc<Mesh<T>>,
    dim: usize,
    left_bc: Vec<BcRow<T>>,
    right_bc: Vec<BcRow<T>>,
    lu: BandedLu<T>,
}

/// Assemble the global collocation matrix and factorize it.
///
/// The number of boundary rows (left plus right) must equal the system
/// dimension. A singular matrix reports the offending pivot row; near the
/// nonlinear solver's convergence this is the expected signal of an
/// ill-posed linearized problem.
pub fn assemble<T: Real>(bvp: &LinearBvp<'_, T>, mesh: &Arc<Mesh<T>>) -> Result<FactoredSystem<T>> {
    let n = bvp.dim;
    if bvp.left_bc.len() + bvp.right_bc.len() != n {
        return Err(Error::Dimension(format!(
            "boundary rows ({} left + {} right) must equal system dimension {}",
            bvp.left_bc.len(),
            bvp.right_bc.len(),
            n
        )));
    }
    for row in bvp.left_bc.iter().chain(bvp.right_bc.iter()) {
        if row.comp >= n {
            return Err(Error::Dimension(format!("BC component {} out of range", row.comp)));
        }
    }
    let n_cells = mesh.n_cells();
    let n_nodes = n_cells + 1;
    let n_unknowns = 2 * n * n_nodes;
    let band = 3 * n;
    let mut mat = BandedMatrix::zeros(n_unknowns, band, band);

    // Unknown layout per node j: values at 2nj .. 2nj+n, derivatives at
    // 2nj+n .. 2nj+2n.
    let val_col = |j: usize, c: usize| 2 * n * j + c;
    let der_col = |j: usize, c: usize| 2 * n * j + n + c;

    let mut q = vec![T::zero(); n * n];
    let mut row = 0usize;

    // Left boundary rows.
    for bc in bvp.left_bc {
        mat.add(row, val_col(0, bc.comp), bc.value_coeff);
        mat.add(row, der_col(0, bc.comp), bc.deriv_coeff);
        row += 1;
    }

    // Nodal rows at node 0: -m + Q(x0) y = r(x0).
    let nodes = mesh.nodes();
    (bvp.q)(nodes[0], &mut q)?;
    for e in 0..n {
        mat.add(row, der_col(0, e), -T::one());
        for c in 0..n {
            let qec = q[e * n + c];
            if qec != T::zero() {
                mat.add(row, val_col(0, c), qec);
            }
        }
        row += 1;
    }

    let half = T::c(0.5);
    let quarter = T::c(0.25);
    let eighth = T::c(0.125);
    for j in 0..n_cells {
        let h = mesh.cell_width(j);
        let xm = mesh.midpoint(j);
        // Midpoint rows: -u'(xm) + Q(xm) u(xm) = r(xm) with
        // u(xm)  = (y_j + y_{j+1})/2 + h (m_j - m_{j+1})/8,
        // u'(xm) = 3 (y_{j+1} - y_j)/(2h) - (m_j + m_{j+1})/4.
        (bvp.q)(xm, &mut q)?;
        let th = T::c(1.5) / h;
        for e in 0..n {
            mat.add(row, val_col(j, e), th);
            mat.add(row, val_col(j + 1, e), -th);
            mat.add(row, der_col(j, e), quarter);
            mat.add(row, der_col(j + 1, e), quarter);
            for c in 0..n {
                let qec = q[e * n + c];
                if qec != T::zero() {
                    mat.add(row, val_col(j, c), half * qec);
                    mat.add(row, val_col(j + 1, c), half * qec);
                    mat.add(row, der_col(j, c), eighth * h * qec);
                    mat.add(row, der_col(j + 1, c), -eighth * h * qec);
                }
            }
            row += 1;
        }
        // Nodal rows at node j+1.
        (bvp.q)(nodes[j + 1], &mut q)?;
        for e in 0..n {
            mat.add(row, der_col(j + 1, e), -T::one());
            for c in 0..n {
                let qec = q[e * n + c];
                if qec != T::zero() {
                    mat.add(row, val_col(j + 1, c), qec);
                }
            }
            row += 1;
        }
    }

    // Right boundary rows.
    for bc in bvp.right_bc {
        mat.add(row, val_col(n_cells, bc.comp), bc.value_coeff);
        mat.add(row, der_col(n_cells, bc.comp), bc.deriv_coeff);
        row += 1;
    }
    debug_assert_eq!(row, n_unknowns);

    ASSEMBLY_COUNT.with(|c| c.set(c.get() + 1));
    let lu = mat.factorize()?;
    Ok(FactoredSystem {
        mesh: mesh.clone(),
        dim: n,
        left_bc: bvp.left_bc.to_vec(),
        right_bc: bvp.right_bc.to_vec(),
        lu,
    })
}

impl<T: Real> FactoredSystem<T> {
    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Conditioning proxy of the factorization (max/min pivot magnitude).
    pub fn pivot_ratio(&self) -> T {
        self.lu.pivot_ratio()
    }

    /// Solve a single problem against the stored factorization.
    pub fn solve_one(&self, problem: &Problem<'_, T>) -> Result<HermiteGridFunction<T>> {
        let n = self.dim;
        if problem.left_data.len() != self.left_bc.len()
            || problem.right_data.len() != self.right_bc.len()
        {
            return Err(Error::Dimension("boundary data does not match BC selectors".into()));
        }
        let n_cells = self.mesh.n_cells();
        let n_nodes = n_cells + 1;
        let mut b = vec![T::zero(); 2 * n * n_nodes];
        let mut r = vec![T::zero(); n];
        let mut row = 0usize;
        for d in problem.left_data {
            b[row] = *d;
            row += 1;
        }
        let nodes = self.mesh.nodes().to_vec();
        (problem.rhs)(nodes[0], &mut r)?;
        b[row..row + n].copy_from_slice(&r);
        row += n;
        for j in 0..n_cells {
            (problem.rhs)(self.mesh.midpoint(j), &mut r)?;
            b[row..row + n].copy_from_slice(&r);
            row += n;
            (problem.rhs)(nodes[j + 1], &mut r)?;
            b[row..row + n].copy_from_slice(&r);
            row += n;
        }
        for d in problem.right_data {
            b[row] = *d;
            row += 1;
        }
        self.lu.solve(&mut b)?;

        let mut out = HermiteGridFunction::zeros(self.mesh.clone(), n);
        for j in 0..n_nodes {
            for c in 0..n {
                out.set_value(j, c, b[2 * n * j + c]);
                out.set_deriv(j, c, b[2 * n * j + n + c]);
            }
        }
        Ok(out)
    }

    /// Solve a batch of problems; exactly one factorization (done at
    /// assembly) backs all of them.
    pub fn solve_many(&self, problems: &[Problem<'_, T>]) -> Result<Vec<HermiteGridFunction<T>>> {
        problems.iter().map(|p| self.solve_one(p)).collect()
    }
}

/// Weighted sum of squared collocation-point residuals of
/// `y'(x) - R_s F(R_s x, y(x))` over the mesh, plus the domain length.
/// Simpson weights per cell; the norm is `sqrt(sum / length)`.
pub fn defect_sumsq<T: Real>(
    y: &HermiteGridFunction<T>,
    r_s: T,
    mut f: impl FnMut(T, &[T], &mut [T]) -> Result<()>,
) -> Result<(T, T)> {
    let mesh = y.mesh().clone();
    let n = y.dim();
    let mut rhs = vec![T::zero(); n];
    let mut vals = vec![T::zero(); n];
    let mut ders = vec![T::zero(); n];
    let sixth = T::c(1.0 / 6.0);

    // Residual squared at each node (computed once, reused by both cells).
    let n_nodes = y.n_nodes();
    let mut node_res2 = vec![T::zero(); n_nodes];
    for j in 0..n_nodes {
        let x = mesh.nodes()[j];
        f(x, y.node_values(j), &mut rhs)?;
        let mut s = T::zero();
        for c in 0..n {
            let r = y.deriv(j, c) - r_s * rhs[c];
            s = s + r * r;
        }
        node_res2[j] = s;
    }
    let mut total = T::zero();
    for j in 0..mesh.n_cells() {
        let xm = mesh.midpoint(j);
        y.evaluate_into(xm, &mut vals, &mut ders)?;
        f(xm, &vals, &mut rhs)?;
        let mut sm = T::zero();
        for c in 0..n {
            let r = ders[c] - r_s * rhs[c];
            sm = sm + r * r;
        }
        let h = mesh.cell_width(j);
        total = total + h * sixth * (node_res2[j] + T::c(4.0) * sm + node_res2[j + 1]);
    }
    Ok((total, mesh.length()))
}

/// Mesh-weighted discrete L2 norm of the collocation defect.
pub fn defect_norm<T: Real>(
    y: &HermiteGridFunction<T>,
    r_s: T,
    f: impl FnMut(T, &[T], &mut [T]) -> Result<()>,
) -> Result<T> {
    let (sum, len) = defect_sumsq(y, r_s, f)?;
    Ok((sum / len).sqrt())
}
