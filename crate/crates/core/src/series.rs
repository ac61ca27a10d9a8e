//! Uniformly indexed observations with a missingness mask.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A uniformly sampled series `y_0..y_T` with per-index observation
/// indicators. `mask[t]` is false exactly when `y_t` is missing; the stored
/// value at a missing index is never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl TimeSeries {
    /// Build from values and an explicit mask of the same length.
    pub fn new(values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                got: mask.len(),
            });
        }
        if values.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        for (t, (&v, &m)) in values.iter().zip(&mask).enumerate() {
            if m && !v.is_finite() {
                return Err(Error::Parse {
                    line: t,
                    message: format!("observed value at index {t} is not finite: {v}"),
                });
            }
        }
        Ok(Self { values, mask })
    }

    /// A fully observed series.
    pub fn complete(values: Vec<f64>) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::new(values, mask)
    }

    /// Build from optional values; `None` marks a missing observation.
    pub fn from_options(values: &[Option<f64>]) -> Result<Self> {
        let mask: Vec<bool> = values.iter().map(Option::is_some).collect();
        let values: Vec<f64> = values.iter().map(|v| v.unwrap_or(0.0)).collect();
        Self::new(values, mask)
    }

    /// Number of indices, `T + 1`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest valid index `T`.
    pub fn last_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_observed(&self, t: usize) -> bool {
        t < self.mask.len() && self.mask[t]
    }

    /// The value at `t`, or `None` if out of range or missing.
    pub fn value(&self, t: usize) -> Option<f64> {
        if self.is_observed(t) {
            Some(self.values[t])
        } else {
            None
        }
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Indices of observed values, in order.
    pub fn observed_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(t, &m)| m.then_some(t))
    }

    /// Raw value storage; entries at missing indices are placeholders.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Copy with the given indices marked missing.
    pub fn with_masked(&self, indices: &[usize]) -> Self {
        let mut out = self.clone();
        for &t in indices {
            if t < out.mask.len() {
                out.mask[t] = false;
            }
        }
        out
    }

    /// Copy with `y_t` replaced (index must be in range).
    pub fn with_value(&self, t: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.values[t] = value;
        out.mask[t] = true;
        out
    }

    /// Errors with the first missing index unless fully observed.
    pub fn require_complete(&self) -> Result<()> {
        match self.mask.iter().position(|&m| !m) {
            Some(t) => Err(Error::MissingValues(t)),
            None => Ok(()),
        }
    }
}
