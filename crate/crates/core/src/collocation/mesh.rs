//! Meshes: strictly increasing node sets with uniform or geometric grading.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cell-size grading of a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Grading<T> {
    Uniform,
    /// Smaller cells toward the left end; each cell `ratio` times the previous.
    GeometricTowardLeft { ratio: T },
    /// Smaller cells toward the right end.
    GeometricTowardRight { ratio: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    nodes: Vec<T>,
    grading: Grading<T>,
}

impl<T: Real> Mesh<T> {
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn n_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn a(&self) -> T {
        self.nodes[0]
    }

    pub fn b(&self) -> T {
        *self.nodes.last().unwrap()
    }

    pub fn length(&self) -> T {
        self.b() - self.a()
    }

    pub fn grading(&self) -> Grading<T> {
        self.grading
    }

    #[inline]
    pub fn cell_width(&self, j: usize) -> T {
        self.nodes[j + 1] - self.nodes[j]
    }

    #[inline]
    pub fn midpoint(&self, j: usize) -> T {
        (self.nodes[j] + self.nodes[j + 1]) * T::c(0.5)
    }

    /// Index of the cell containing `x` (nodes map to the cell on their right,
    /// except `b` which maps to the last cell).
    pub fn locate(&self, x: T) -> Result<usize> {
        if x < self.a() || x > self.b() {
            return Err(Error::Domain(format!(
                "x = {x} outside mesh domain [{}, {}]",
                self.a(),
                self.b()
            )));
        }
        let n = self.n_cells();
        let mut lo = 0usize;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.nodes[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo.min(n - 1))
    }
}

/// Build a mesh of `n_cells` intervals over `[a, b]` with the given grading.
pub fn build_mesh<T: Real>(a: T, b: T, n_cells: usize, grading: Grading<T>) -> Result<Mesh<T>> {
    if !(a < b) {
        return Err(Error::InvalidMesh(format!("need a < b, got [{a}, {b}]")));
    }
    if n_cells < 2 {
        return Err(Error::InvalidMesh(format!("need at least 2 cells, got {n_cells}")));
    }
    let len = b - a;
    let mut nodes = Vec::with_capacity(n_cells + 1);
    nodes.push(a);
    match grading {
        Grading::Uniform => {
            for j in 1..n_cells {
                nodes.push(a + len * T::from_usize(j).unwrap() / T::from_usize(n_cells).unwrap());
            }
        }
        Grading::GeometricTowardLeft { ratio } | Grading::GeometricTowardRight { ratio } => {
            if !(ratio > T::one()) {
                return Err(Error::InvalidMesh(format!("geometric ratio must exceed 1, got {ratio}")));
            }
            // h0 (q^N - 1)/(q - 1) = len
            let n_t = T::from_usize(n_cells).unwrap();
            let h0 = len * (ratio - T::one()) / (ratio.powf(n_t) - T::one());
            let toward_left = matches!(grading, Grading::GeometricTowardLeft { .. });
            let mut widths: Vec<T> = (0..n_cells)
                .map(|k| h0 * ratio.powi(k as i32))
                .collect();
            if !toward_left {
                widths.reverse();
            }
            let mut x = a;
            for w in widths.iter().take(n_cells - 1) {
                x = x + *w;
                nodes.push(x);
            }
        }
    }
    nodes.push(b);
    for w in nodes.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidMesh("nodes not strictly increasing".into()));
        }
    }
    Ok(Mesh { nodes, grading })
}

/// Geometric ratio such that the first (smallest) cell has width `h0`.
/// Used to keep interface resolution independent of the domain length.
pub fn geometric_ratio_for_first_cell<T: Real>(len: T, n_cells: usize, h0: T) -> Result<T> {
    let n_t = T::from_usize(n_cells).unwrap();
    if !(h0 > T::zero()) || h0 * n_t >= len {
        return Err(Error::InvalidMesh(
            "first-cell target must be positive and below the uniform width".into(),
        ));
    }
    // f(q) = h0 (q^N - 1)/(q - 1) - len is increasing in q; f(1+) < 0.
    let f = |q: T| h0 * (q.powf(n_t) - T::one()) / (q - T::one()) - len;
    let mut lo = T::one() + T::c(1e-9);
    let mut hi = T::c(2.0);
    while f(hi) < T::zero() {
        hi = hi * T::c(2.0);
        if hi > T::c(1e6) {
            return Err(Error::InvalidMesh("no geometric ratio found".into()));
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) * T::c(0.5);
        if f(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * T::c(0.5))
}
