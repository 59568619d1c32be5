//! Packed lower-triangular Cholesky factorization.

use crate::error::{Error, Result};
use crate::kernels::dot;

/// Lower Cholesky factor stored row-major and packed: row `i` holds `i + 1`
/// entries starting at `i (i + 1) / 2`.
#[derive(Debug, Clone)]
pub struct PackedCholesky {
    n: usize,
    data: Vec<f64>,
    jitter: f64,
}

impl PackedCholesky {
    /// Factor the symmetric matrix whose lower triangle is given by `entry(i, j)`,
    /// `j ≤ i`. On failure the diagonal is raised by `1e-12 · max diag` and the
    /// factorization retried once.
    pub fn factor<F: Fn(usize, usize) -> f64>(n: usize, entry: F) -> Result<Self> {
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                packed.push(entry(i, j));
            }
        }
        let max_diag = (0..n).map(|i| packed[i * (i + 1) / 2 + i]).fold(0.0_f64, f64::max);
        match factor_in_place(n, packed.clone()) {
            Ok(data) => Ok(PackedCholesky { n, data, jitter: 0.0 }),
            Err(_) => {
                let jitter = 1e-12 * max_diag;
                for i in 0..n {
                    packed[i * (i + 1) / 2 + i] += jitter;
                }
                factor_in_place(n, packed).map(|data| PackedCholesky { n, data, jitter }).map_err(|(row, pivot)| {
                    Error::Numeric(format!("Cholesky failed at row {row} of {n} with pivot {pivot:e} after jitter {jitter:e}"))
                })
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Diagonal jitter that was needed, zero if none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..=start + i]
    }

    /// `L z`.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n);
        (0..self.n).map(|i| dot(self.row(i), &z[..=i])).collect()
    }
}

fn factor_in_place(n: usize, mut a: Vec<f64>) -> std::result::Result<Vec<f64>, (usize, f64)> {
    for i in 0..n {
        let ri = i * (i + 1) / 2;
        for j in 0..=i {
            let rj = j * (j + 1) / 2;
            let s = dot(&a[ri..ri + j], &a[rj..rj + j]);
            let v = a[ri + j] - s;
            if i == j {
                if !(v > 0.0) || !v.is_finite() {
                    return Err((i, v));
                }
                a[ri + i] = v.sqrt();
            } else {
                a[ri + j] = v / a[rj + j];
            }
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_matrix() {
        let n = 20;
        let m = |i: usize, j: usize| (-(i as f64 - j as f64).abs() / 5.0).exp() + if i == j { 0.1 } else { 0.0 };
        let c = PackedCholesky::factor(n, m).unwrap();
        assert_eq!(c.jitter(), 0.0);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&c.row(i)[..=j], c.row(j));
                assert!((v - m(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_fails_with_diagnostic() {
        let err = PackedCholesky::factor(2, |i, j| if i == j { 1.0 } else { 2.0 }).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }
}
