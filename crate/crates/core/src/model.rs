//! Holt-Winters structural matrices, cell window geometry, and weights.
//!
//! The state is `x = (level, trend, s_0, s_1, ..., s_{p-1})` where `s_0` is
//! the most recent seasonal slot and `s_{p-1}` the oldest. The measurement
//! row `w` reads level + trend + oldest seasonal slot; the transition `A`
//! advances level by trend and cycles the seasonal block (oldest slot wraps
//! to the front).

use nalgebra::{DMatrix, DVector};

use crate::series::TimeSeries;
use crate::{Error, Result};

/// Structural matrices for an additive Holt-Winters model of period `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStructure {
    period: usize,
    w: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl ModelStructure {
    pub fn period(&self) -> usize {
        self.period
    }

    /// State dimension `n = p + 2`.
    pub fn state_dim(&self) -> usize {
        self.period + 2
    }

    /// Measurement vector: 1 at level, trend, and the oldest seasonal slot.
    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    /// Transition matrix.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Seasonal-difference extractor: +1/−1 on the two most recent slots.
    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// The measured combination `w · x`.
    pub fn measure(&self, x: &DVector<f64>) -> f64 {
        self.w.dot(x)
    }

    /// Gain vector `(alpha, beta, gamma, 0, ..., 0)`.
    pub fn gain(&self, alpha: f64, beta: f64, gamma: f64) -> DVector<f64> {
        let mut g = DVector::zeros(self.state_dim());
        g[0] = alpha;
        g[1] = beta;
        g[2] = gamma;
        g
    }

    /// Solve `A z = x`. `A` is a permutation plus a unit upper-triangular
    /// 2x2 block, so the inverse is exact: the seasonal cycle is reversed
    /// and level is rolled back by one trend step.
    pub fn apply_inverse(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.state_dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let mut z = DVector::zeros(n);
        z[1] = x[1];
        z[0] = x[0] - x[1];
        // Forward cycle: new s_0 = old s_{p-1}, new s_k = old s_{k-1}.
        let p = self.period;
        z[2 + p - 1] = x[2];
        for k in 1..p {
            z[2 + k - 1] = x[2 + k];
        }
        Ok(z)
    }
}

/// Build the structural matrices for period `p >= 2`.
pub fn build_structure(period: usize) -> Result<ModelStructure> {
    if period < 2 {
        return Err(Error::InvalidPeriod(period));
    }
    let n = period + 2;
    let mut w = DVector::zeros(n);
    w[0] = 1.0;
    w[1] = 1.0;
    w[n - 1] = 1.0;

    let mut a = DMatrix::zeros(n, n);
    a[(0, 0)] = 1.0;
    a[(0, 1)] = 1.0;
    a[(1, 1)] = 1.0;
    // Seasonal block: slot 0 receives the oldest slot, the rest shift down.
    a[(2, n - 1)] = 1.0;
    for k in 1..period {
        a[(2 + k, 2 + k - 1)] = 1.0;
    }

    let mut b = DVector::zeros(n);
    b[2] = 1.0;
    b[3] = -1.0;

    Ok(ModelStructure {
        period,
        w,
        a,
        b,
    })
}

/// Apply `A^k` to `x` by repeated multiplication.
pub fn transition_power_apply(
    structure: &ModelStructure,
    x: &DVector<f64>,
    k: usize,
) -> Result<DVector<f64>> {
    let n = structure.state_dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let mut out = x.clone();
    for _ in 0..k {
        out = structure.a() * out;
    }
    Ok(out)
}

/// The j-th design row `a_j = (A^T)^j w`, so that `a_j · x = w · (A^j x)`.
pub fn design_row(structure: &ModelStructure, j: usize) -> DVector<f64> {
    let mut row = structure.w().clone();
    for _ in 0..j {
        row = structure.a().tr_mul(&row);
    }
    row
}

/// Window layout shared by every cell: half-width `K`, unimodal weights
/// `alpha_{-K..K}`, and the stacked design matrix with rows `a_0..a_{2K}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    half_width: usize,
    decay: f64,
    weights: Vec<f64>,
    design: DMatrix<f64>,
}

impl CellGeometry {
    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Weights `alpha_{-K}..alpha_K`, peak 1 at the center.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(2K+1) x n` design matrix; row `j` is `a_j`.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Design row `a_j` as a vector.
    pub fn row(&self, j: usize) -> DVector<f64> {
        self.design.row(j).transpose()
    }
}

/// Build window geometry with weights `alpha_r = decay^|r|`.
pub fn build_cell_geometry(
    structure: &ModelStructure,
    half_width: usize,
    decay: f64,
) -> Result<CellGeometry> {
    if half_width < 1 {
        return Err(Error::InvalidParameter {
            name: "half_width",
            value: half_width as f64,
            requirement: "K >= 1",
        });
    }
    if !(decay > 0.0 && decay < 1.0) {
        return Err(Error::InvalidParameter {
            name: "decay",
            value: decay,
            requirement: "decay in (0, 1)",
        });
    }
    let size = 2 * half_width + 1;
    let weights: Vec<f64> = (0..size)
        .map(|j| {
            let r = j as isize - half_width as isize;
            decay.powi(r.unsigned_abs() as i32)
        })
        .collect();

    let n = structure.state_dim();
    let mut design = DMatrix::zeros(size, n);
    let mut row = structure.w().clone();
    for j in 0..size {
        design.row_mut(j).copy_from(&row.transpose());
        row = structure.a().tr_mul(&row);
    }

    Ok(CellGeometry {
        half_width,
        decay,
        weights,
        design,
    })
}

/// Effective weights for the window centered at time `t`: entry `r + K` is
/// `d_{t+r} * alpha_r`, with `d` zero outside `[0, T]` and at missing values.
pub fn window_weights(geometry: &CellGeometry, ts: &TimeSeries, t: i64) -> Vec<f64> {
    let k = geometry.half_width() as i64;
    geometry
        .weights()
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let time = t + j as i64 - k;
            let observed = time >= 0 && ts.is_observed(time as usize);
            if observed {
                alpha
            } else {
                0.0
            }
        })
        .collect()
}
