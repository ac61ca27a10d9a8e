//! Decomposition, anomaly detection, imputation, and forecast scoring on top
//! of a fitted state sequence.

use serde::{Deserialize, Serialize};

use crate::forecast::median;
use crate::model::ModelStructure;
use crate::series::TimeSeries;
use crate::solver::StateSequence;
use crate::{Error, Result};

/// Default anomaly mass: the most extreme 1.5% of observations.
pub const DEFAULT_ANOMALY_FRACTION: f64 = 0.015;

/// Default sliding-MAPE window length.
pub const DEFAULT_MAPE_WINDOW: usize = 10;

/// Interpretable components per time index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub level: Vec<f64>,
    pub trend: Vec<f64>,
    /// Most recent seasonal slot of the state at each index.
    pub seasonal: Vec<f64>,
}

/// Extract level/trend/seasonal sequences from the centered states.
pub fn decompose(centered: &StateSequence, structure: &ModelStructure) -> Decomposition {
    let n = structure.state_dim();
    debug_assert!(n >= 4);
    let mut out = Decomposition {
        level: Vec::with_capacity(centered.len()),
        trend: Vec::with_capacity(centered.len()),
        seasonal: Vec::with_capacity(centered.len()),
    };
    for x in centered.states() {
        out.level.push(x[0]);
        out.trend.push(x[1]);
        out.seasonal.push(x[2]);
    }
    out
}

/// Flagged time indices with the residual cutoffs that isolate them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    /// Flagged indices, ascending.
    pub indices: Vec<usize>,
    /// Residuals at or below this value are flagged (low side).
    pub threshold_low: f64,
    /// Residuals at or above this value are flagged (high side).
    pub threshold_high: f64,
    pub fraction: f64,
}

/// Flag the `ceil(fraction * N)` observations with the largest absolute
/// deviation from the median residual, two-sided; ties break toward the
/// earlier index.
pub fn detect_anomalies(residuals: &[(usize, f64)], fraction: f64) -> Result<AnomalyReport> {
    if residuals.is_empty() {
        return Err(Error::EmptyPool("residual"));
    }
    if !(fraction > 0.0 && fraction < 0.5) {
        return Err(Error::InvalidParameter {
            name: "fraction",
            value: fraction,
            requirement: "in (0, 0.5)",
        });
    }
    let n = residuals.len();
    let values: Vec<f64> = residuals.iter().map(|(_, r)| *r).collect();
    let med = median(&values);
    let count = ((fraction * n as f64).ceil() as usize).clamp(1, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let da = (values[a] - med).abs();
        let db = (values[b] - med).abs();
        db.partial_cmp(&da)
            .unwrap()
            .then(residuals[a].0.cmp(&residuals[b].0))
    });
    let flagged = &order[..count];
    let cut = (values[flagged[count - 1]] - med).abs();

    let mut indices: Vec<usize> = flagged.iter().map(|&i| residuals[i].0).collect();
    indices.sort_unstable();
    Ok(AnomalyReport {
        indices,
        threshold_low: med - cut,
        threshold_high: med + cut,
        fraction,
    })
}

/// Fill missing observations with the fitted measurement `w . xcheck_t`;
/// observed values pass through unchanged. The result is fully observed.
pub fn impute(
    ts: &TimeSeries,
    centered: &StateSequence,
    structure: &ModelStructure,
) -> Result<TimeSeries> {
    if centered.len() != ts.len() {
        return Err(Error::DimensionMismatch {
            expected: ts.len(),
            got: centered.len(),
        });
    }
    let values: Vec<f64> = (0..ts.len())
        .map(|t| match ts.value(t) {
            Some(y) => y,
            None => structure.measure(centered.state(t)),
        })
        .collect();
    TimeSeries::complete(values)
}

/// Trailing sliding-window mean absolute percentage error.
///
/// Entry `i` of the result covers the window ending at position
/// `i + window - 1`; a window containing a zero actual value is skipped
/// (`None`).
pub fn mape_sliding(
    actual: &[f64],
    predicted: &[f64],
    window: usize,
) -> Result<Vec<Option<f64>>> {
    if actual.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    if window < 1 {
        return Err(Error::InvalidParameter {
            name: "window",
            value: window as f64,
            requirement: ">= 1",
        });
    }
    if actual.len() < window {
        return Ok(Vec::new());
    }
    let ape: Vec<Option<f64>> = actual
        .iter()
        .zip(predicted)
        .map(|(&a, &p)| {
            if a == 0.0 {
                None
            } else {
                Some(100.0 * (a - p).abs() / a.abs())
            }
        })
        .collect();
    Ok((window - 1..actual.len())
        .map(|end| {
            let slice = &ape[end + 1 - window..=end];
            if slice.iter().any(Option::is_none) {
                None
            } else {
                Some(slice.iter().map(|v| v.unwrap()).sum::<f64>() / window as f64)
            }
        })
        .collect())
}
