//! Cholesky factorization and solves for symmetric positive definite banded
//! matrices stored by diagonals.
//!
//! The coupling quadratic plus the per-cell proximal blocks form a
//! block-tridiagonal SPD matrix with scalar bandwidth `2n - 1`; a banded
//! factorization keeps the linear step O(T · n^2) per solve.

use crate::{Error, Result};

/// Lower-band storage: `data[d][i] = M[i + d, i]` for diagonal offset
/// `d = 0..=bandwidth`, row `i + d < dim`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    dim: usize,
    bandwidth: usize,
    data: Vec<Vec<f64>>,
}

impl BandMatrix {
    pub fn zeros(dim: usize, bandwidth: usize) -> Self {
        let data = (0..=bandwidth).map(|_| vec![0.0; dim]).collect();
        Self {
            dim,
            bandwidth,
            data,
        }
    }

    /// Add `value` at `(row, col)` of the symmetric matrix; only the lower
    /// triangle within the band is stored.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        let d = r - c;
        debug_assert!(d <= self.bandwidth, "entry outside band");
        self.data[d][c] += value;
    }

    fn get(&self, d: usize, col: usize) -> f64 {
        self.data[d][col]
    }
}

/// Cholesky factor of a [`BandMatrix`], same band layout.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    dim: usize,
    bandwidth: usize,
    l: Vec<Vec<f64>>,
}

impl BandCholesky {
    /// Factor an SPD band matrix. Fails on a non-positive pivot.
    pub fn factor(m: &BandMatrix) -> Result<Self> {
        let n = m.dim;
        let bw = m.bandwidth;
        let mut l: Vec<Vec<f64>> = (0..=bw).map(|_| vec![0.0; n]).collect();

        for j in 0..n {
            let mut diag = m.get(0, j);
            let kmin = j.saturating_sub(bw);
            for k in kmin..j {
                let v = l[j - k][k];
                diag -= v * v;
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(Error::LinearSolve("non-positive pivot in banded Cholesky"));
            }
            let dsqrt = diag.sqrt();
            l[0][j] = dsqrt;

            let imax = (j + bw).min(n - 1);
            for i in (j + 1)..=imax {
                let mut v = m.get(i - j, j);
                let kmin = i.saturating_sub(bw).max(kmin);
                for k in kmin..j {
                    v -= l[i - k][k] * l[j - k][k];
                }
                l[i - j][j] = v / dsqrt;
            }
        }

        Ok(Self {
            dim: n,
            bandwidth: bw,
            l,
        })
    }

    /// Solve `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        let bw = self.bandwidth;
        debug_assert_eq!(b.len(), n);
        // Forward: L y = b
        for j in 0..n {
            let y = b[j] / self.l[0][j];
            b[j] = y;
            let imax = (j + bw).min(n - 1);
            for i in (j + 1)..=imax {
                b[i] -= self.l[i - j][j] * y;
            }
        }
        // Backward: L^T x = y
        for j in (0..n).rev() {
            let mut v = b[j];
            let imax = (j + bw).min(n - 1);
            for i in (j + 1)..=imax {
                v -= self.l[i - j][j] * b[i];
            }
            b[j] = v / self.l[0][j];
        }
    }
}
