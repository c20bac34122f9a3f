//! Banded LU factorization with partial pivoting and multiple right-hand
//! side solves (compact band storage, Numerical Recipes `bandec`/`banbks`
//! organization).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Band matrix under assembly: row `i` holds global columns
/// `i - kl ..= i + ku` in compact slots `0 ..= kl + ku`.
#[derive(Debug, Clone)]
pub struct BandedMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    /// Compact rows, `n x (kl + ku + 1)`.
    data: Vec<T>,
}

impl<T: Real> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![T::zero(); n * (kl + ku + 1)] }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.n && col < self.n);
        let offset = col as isize - row as isize + self.kl as isize;
        debug_assert!(
            offset >= 0 && (offset as usize) <= self.kl + self.ku,
            "entry ({row},{col}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let mm = self.kl + self.ku + 1;
        self.data[row * mm + offset as usize] = self.data[row * mm + offset as usize] + value;
    }

    /// LU-factorize in place with partial pivoting. Errors on an exactly
    /// zero pivot, reporting its row.
    pub fn factorize(mut self) -> Result<BandedLu<T>> {
        let n = self.n;
        let m1 = self.kl;
        let mm = self.kl + self.ku + 1;
        let a = &mut self.data;

        // Left-justify the first m1 rows.
        let mut l = m1;
        for i in 0..m1 {
            for j in (m1 - i)..mm {
                a[i * mm + (j - l)] = a[i * mm + j];
            }
            l -= 1;
            for j in (mm - l - 1)..mm {
                a[i * mm + j] = T::zero();
            }
        }

        let mut al = vec![T::zero(); n * m1];
        let mut indx = vec![0usize; n];
        let mut min_pivot = T::infinity();
        let mut max_pivot = T::zero();

        for k in 0..n {
            let l_end = (m1 + k + 1).min(n);
            let mut ipiv = k;
            let mut pmax = a[k * mm].abs();
            for j in (k + 1)..l_end {
                if a[j * mm].abs() > pmax {
                    pmax = a[j * mm].abs();
                    ipiv = j;
                }
            }
            indx[k] = ipiv;
            if pmax == T::zero() {
                return Err(Error::SingularFactorization { pivot_row: k });
            }
            if ipiv != k {
                for j in 0..mm {
                    a.swap(k * mm + j, ipiv * mm + j);
                }
            }
            let pivot = a[k * mm];
            min_pivot = min_pivot.min(pivot.abs());
            max_pivot = max_pivot.max(pivot.abs());
            for i in (k + 1)..l_end {
                let dum = a[i * mm] / pivot;
                al[k * m1 + (i - k - 1)] = dum;
                for j in 1..mm {
                    a[i * mm + (j - 1)] = a[i * mm + j] - dum * a[k * mm + j];
                }
                a[i * mm + (mm - 1)] = T::zero();
            }
        }

        Ok(BandedLu { n, kl: self.kl, ku: self.ku, upper: self.data, al, indx, min_pivot, max_pivot })
    }
}

/// Factorized band matrix; immutable, reusable for any number of solves.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    #[allow(dead_code)]
    ku: usize,
    upper: Vec<T>,
    al: Vec<T>,
    indx: Vec<usize>,
    min_pivot: T,
    max_pivot: T,
}

impl<T: Real> BandedLu<T> {
    /// Solve in place for one right-hand side.
    pub fn solve(&self, b: &mut [T]) -> Result<()> {
        if b.len() != self.n {
            return Err(Error::Dimension(format!(
                "rhs length {} does not match system size {}",
                b.len(),
                self.n
            )));
        }
        let n = self.n;
        let m1 = self.kl;
        let mm = self.kl + self.ku + 1;
        for k in 0..n {
            let ipiv = self.indx[k];
            if ipiv != k {
                b.swap(k, ipiv);
            }
            let l_end = (m1 + k + 1).min(n);
            for i in (k + 1)..l_end {
                b[i] = b[i] - self.al[k * m1 + (i - k - 1)] * b[k];
            }
        }
        let mut l = 1;
        for i in (0..n).rev() {
            let mut x = b[i];
            for k in 1..l {
                x = x - self.upper[i * mm + k] * b[k + i];
            }
            b[i] = x / self.upper[i * mm];
            if l < mm {
                l += 1;
            }
        }
        Ok(())
    }

    /// Crude conditioning proxy: largest over smallest pivot magnitude.
    pub fn pivot_ratio(&self) -> T {
        self.max_pivot / self.min_pivot
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tridiagonal_solve() {
        // [2 1 0; 1 2 1; 0 1 2] x = [4, 7, 6] -> x = [1, 2, 2]
        let mut m = BandedMatrix::<f64>::zeros(3, 1, 1);
        for i in 0..3 {
            m.add(i, i, 2.0);
            if i > 0 {
                m.add(i, i - 1, 1.0);
            }
            if i < 2 {
                m.add(i, i + 1, 1.0);
            }
        }
        let lu = m.factorize().unwrap();
        let mut b = [4.0, 7.0, 6.0];
        lu.solve(&mut b).unwrap();
        assert_abs_diff_eq!(b[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[2], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pivoting_dense_block() {
        // Needs row interchanges: zero on the initial diagonal.
        let mut m = BandedMatrix::<f64>::zeros(4, 2, 2);
        let a = [
            [0.0, 2.0, 1.0, 0.0],
            [3.0, 1.0, 0.0, 1.0],
            [1.0, 0.0, 2.0, 1.0],
            [0.0, 1.0, 1.0, 3.0],
        ];
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let mut b = [0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                if a[i][j] != 0.0 || (j as isize - i as isize).abs() <= 2 {
                    m.add(i, j, a[i][j]);
                }
                b[i] += a[i][j] * x_true[j];
            }
        }
        let lu = m.factorize().unwrap();
        lu.solve(&mut b).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(b[i], x_true[i], epsilon = 1e-12);
        }
        assert!(lu.pivot_ratio() >= 1.0);
    }

    #[test]
    fn singular_reports_pivot() {
        let mut m = BandedMatrix::<f64>::zeros(2, 1, 1);
        m.add(0, 0, 1.0);
        m.add(0, 1, 2.0);
        m.add(1, 0, 2.0);
        m.add(1, 1, 4.0);
        match m.factorize() {
            Err(Error::SingularFactorization { pivot_row }) => assert_eq!(pivot_row, 1),
            other => panic!("expected singular factorization, got {other:?}"),
        }
    }

    #[test]
    fn random_banded_against_dense() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let (kl, ku) = (5, 4);
        let mut dense = vec![vec![0.0f64; n]; n];
        let mut m = BandedMatrix::<f64>::zeros(n, kl, ku);
        for i in 0..n {
            for j in 0..n {
                let d = j as isize - i as isize;
                if d >= -(kl as isize) && d <= ku as isize {
                    let v: f64 = rng.gen_range(-1.0..1.0) + if i == j { 4.0 } else { 0.0 };
                    dense[i][j] = v;
                    m.add(i, j, v);
                }
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            b[i] = (0..n).map(|j| dense[i][j] * x_true[j]).sum();
        }
        let lu = m.factorize().unwrap();
        lu.solve(&mut b).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(b[i], x_true[i], epsilon = 1e-10);
        }
    }
}
