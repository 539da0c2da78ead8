//! Cholesky factorization of symmetric positive definite band matrices.

use crate::error::{Error, Result};

/// `L Lᵀ` factor stored row by row: row `i` holds columns `i-b..=i`.
#[derive(Debug, Clone)]
pub(crate) struct BandedCholesky {
    n: usize,
    b: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the matrix whose lower band is given by `entry(i, j)` for
    /// `i - b <= j <= i`.
    pub fn factor(n: usize, b: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = b + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            for j in j0..=i {
                // columns shared by rows i and j
                let k0 = j0.max(j.saturating_sub(b));
                let ri = i * w + b - i;
                let rj = j * w + b - j;
                let dot: f64 = (k0..j).map(|k| l[ri + k] * l[rj + k]).sum();
                let s = entry(i, j) - dot;
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    l[ri + i] = s.sqrt();
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Ok(Self { n, b, l })
    }

    /// Overwrites `x` with `A⁻¹ x`.
    pub fn solve(&self, x: &mut [f64]) {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        assert_eq!(x.len(), n);
        for i in 0..n {
            let ri = i * w + b - i;
            let k0 = i.saturating_sub(b);
            let s: f64 = (k0..i).map(|k| self.l[ri + k] * x[k]).sum();
            x[i] = (x[i] - s) / self.l[ri + i];
        }
        for i in (0..n).rev() {
            let ri = i * w + b - i;
            x[i] /= self.l[ri + i];
            let xi = x[i];
            for k in i.saturating_sub(b)..i {
                x[k] -= self.l[ri + k] * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn test_matrix(n: usize, b: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            let d = i.abs_diff(j);
            if d == 0 {
                4.0 + (i as f64 * 0.3).sin()
            } else if d <= b {
                -1.0 / (d as f64 + (i + j) as f64 * 0.1)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn solves_against_dense() {
        let (n, b) = (40, 5);
        let a = test_matrix(n, b);
        let f = BandedCholesky::factor(n, b, |i, j| a[(i, j)]).unwrap();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut x = rhs.clone();
        f.solve(&mut x);
        let back = &a * nalgebra::DVector::from_vec(x);
        for i in 0..n {
            assert!((back[i] - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_is_reported() {
        let a = test_matrix(10, 2);
        let r = BandedCholesky::factor(10, 2, |i, j| a[(i, j)] - if i == j { 10.0 } else { 0.0 });
        assert!(matches!(r, Err(Error::NotPositiveDefinite { pivot: 0, .. })));
    }
}
