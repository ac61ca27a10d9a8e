//! High-level fit pipeline: assemble the cell problem, solve it, center the
//! states, and derive residuals, increments, and the decomposition.

use serde::{Deserialize, Serialize};

use crate::analytics::{decompose, Decomposition};
use crate::forecast::{extract_increments, extract_residuals, NoisePools};
use crate::model::{build_cell_geometry, build_structure, CellGeometry, ModelStructure};
use crate::series::TimeSeries;
use crate::solver::{center, solve, ProblemSpec, SolverConfig, SolverStats, StateSequence};
use crate::Result;

/// Everything needed to reproduce a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub period: usize,
    /// Window half-width; defaults to the period.
    pub half_width: Option<usize>,
    pub decay: f64,
    /// Seasonal total-variation weight.
    pub lambda1: f64,
    /// Dynamics-coupling weight.
    pub lambda2: f64,
    pub solver: SolverConfig,
}

impl FitOptions {
    pub fn new(period: usize) -> Self {
        Self {
            period,
            half_width: None,
            decay: 0.9,
            lambda1: 1.0,
            lambda2: 10.0,
            solver: SolverConfig::default(),
        }
    }

    pub fn effective_half_width(&self) -> usize {
        self.half_width.unwrap_or(self.period)
    }
}

/// A complete fit: raw and centered states plus derived series.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub options: FitOptions,
    pub structure: ModelStructure,
    pub geometry: CellGeometry,
    pub series: TimeSeries,
    /// Raw per-cell states (window-start convention).
    pub raw: StateSequence,
    /// Centered states; `w . centered[t]` is the fitted value at `t`.
    pub centered: StateSequence,
    /// Fitted measurement at every index, observed or not.
    pub fitted: Vec<f64>,
    /// One-step residuals at observed indices.
    pub residuals: Vec<(usize, f64)>,
    /// State increments for `t = 1..=T`.
    pub increments: Vec<Vec<f64>>,
    pub decomposition: Decomposition,
    pub stats: SolverStats,
}

impl FitResult {
    /// Noise pools with the default boundary trim (the window half-width).
    pub fn noise_pools(&self) -> NoisePools {
        self.noise_pools_with_trim(self.options.effective_half_width())
    }

    pub fn noise_pools_with_trim(&self, trim: usize) -> NoisePools {
        NoisePools::from_fit(&self.series, &self.centered, &self.structure, trim)
    }
}

/// Fit the linked-cell model to a series.
pub fn fit_series(ts: &TimeSeries, options: &FitOptions) -> Result<FitResult> {
    let structure = build_structure(options.period)?;
    let geometry = build_cell_geometry(&structure, options.effective_half_width(), options.decay)?;
    let problem = ProblemSpec::assemble(ts, &structure, &geometry, options.lambda1, options.lambda2)?;
    let (raw, stats) = solve(&problem, &options.solver)?;
    let centered = center(&raw, &structure, options.effective_half_width())?;
    let fitted: Vec<f64> = centered.states().iter().map(|x| structure.measure(x)).collect();
    let residuals = extract_residuals(ts, &centered, &structure);
    let increments = extract_increments(&centered, &structure)
        .into_iter()
        .map(|g| g.as_slice().to_vec())
        .collect();
    let decomposition = decompose(&centered, &structure);
    Ok(FitResult {
        options: options.clone(),
        structure,
        geometry,
        series: ts.clone(),
        raw,
        centered,
        fitted,
        residuals,
        increments,
        decomposition,
        stats,
    })
}
