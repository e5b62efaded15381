//! Row-packed lower-triangular Cholesky factor that can grow one row at a time.
//!
//! A batch factorization is just a sequence of row extensions, so a factor
//! grown incrementally is bitwise identical to one built from scratch on the
//! same data in the same order.

#[derive(Clone, Debug, Default)]
pub(crate) struct LowerFactor {
    /// Row `i` holds `L[i][0..=i]`.
    rows: Vec<Vec<f64>>,
}

/// Diagonal pivot was not positive while extending the factor.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NotPositiveDefinite;

impl LowerFactor {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.rows[i][i]
    }

    /// Factor the `n×n` symmetric matrix given by `entry(i, j)` (only `j <= i`
    /// is queried).
    pub fn decompose(n: usize, mut entry: impl FnMut(usize, usize) -> f64) -> Result<Self, NotPositiveDefinite> {
        let mut factor = Self {
            rows: Vec::with_capacity(n),
        };
        let mut cross = Vec::with_capacity(n);
        for i in 0..n {
            cross.clear();
            cross.extend((0..i).map(|j| entry(i, j)));
            factor.push(&cross, entry(i, i))?;
        }
        Ok(factor)
    }

    /// Appends the row for a new point whose covariances with the existing
    /// points are `cross` and whose own (noisy, jittered) variance is `diag`.
    /// Returns the new row (which is `L⁻¹·cross` followed by the pivot).
    pub fn push(&mut self, cross: &[f64], diag: f64) -> Result<&[f64], NotPositiveDefinite> {
        debug_assert_eq!(cross.len(), self.len());
        let mut row = self.solve_lower(cross);
        let sq: f64 = row.iter().map(|v| v * v).sum();
        let pivot = diag - sq;
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(NotPositiveDefinite);
        }
        row.push(pivot.sqrt());
        self.rows.push(row);
        Ok(self.rows.last().map(Vec::as_slice).unwrap_or(&[]))
    }

    /// Solves `L·z = b` for the leading `b.len()` rows.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(b.len() + 1);
        for (i, bi) in b.iter().enumerate() {
            let row = &self.rows[i];
            let mut s = *bi;
            for (l, zj) in row[..i].iter().zip(&z) {
                s -= l * zj;
            }
            z.push(s / row[i]);
        }
        z
    }

    /// Solves `Lᵀ·w = z`.
    pub fn solve_upper(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len();
        let mut w = z.to_vec();
        for i in (0..n).rev() {
            let row = &self.rows[i];
            w[i] /= row[i];
            let wi = w[i];
            for (wj, l) in w[..i].iter_mut().zip(&row[..i]) {
                *wj -= l * wi;
            }
        }
        w
    }

    /// Solves `(L·Lᵀ)·x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// ln det(L·Lᵀ).
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.len()).map(|i| self.diag(i).ln()).sum::<f64>()
    }

    /// Dense inverse of `L·Lᵀ`, row-major.
    pub fn inverse(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut inv = vec![vec![0.0; n]; n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                inv[i][j] = v;
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<Vec<f64>> {
        // A·Aᵀ + n·I with a fixed A.
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| ((i * 7 + j * 3) % 5) as f64 - 2.0).collect())
            .collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let s: f64 = (0..n).map(|k| a[i][k] * a[j][k]).sum();
                        s + if i == j { n as f64 } else { 0.0 }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn reconstructs_matrix() {
        let m = spd(6);
        let f = LowerFactor::decompose(6, |i, j| m[i][j]).unwrap();
        for i in 0..6 {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| f.row(i)[k] * f.row(j)[k]).sum();
                assert!((s - m[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn solve_inverts() {
        let m = spd(5);
        let f = LowerFactor::decompose(5, |i, j| m[i][j]).unwrap();
        let b = [1.0, -2.0, 0.5, 3.0, 0.0];
        let x = f.solve(&b);
        for i in 0..5 {
            let r: f64 = (0..5).map(|j| m[i][j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let m = [[1.0, 2.0], [2.0, 1.0]];
        assert!(LowerFactor::decompose(2, |i, j| m[i][j]).is_err());
    }
}
