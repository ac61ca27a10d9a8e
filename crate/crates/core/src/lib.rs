//! Robust time-series analysis built on exponential-smoothing cells.
//!
//! A single structured convex program fits overlapping local exponential
//! smoothing estimates ("cells") linked by the Holt-Winters dynamics. One fit
//! simultaneously denoises, decomposes into level/trend/seasonality, fills in
//! missing observations, exposes a residual pool for anomaly detection, and
//! conditions a sampling-based forecaster with inner/outer confidence bands.
//! Classic Holt-Winters and a robust pre-filtered variant are included as
//! comparison baselines.

pub mod analytics;
pub mod baselines;
pub mod bench;
pub mod forecast;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod series;
pub mod solver;
pub mod synth;

pub use analytics::{decompose, detect_anomalies, impute, mape_sliding, AnomalyReport, Decomposition};
pub use baselines::{
    hw_filter, hw_fit, hw_forecast, rhw_clean, HwFilterOutput, HwFitOptions, HwParams,
    RobustFilterParams,
};
pub use bench::{run_benchmark, score_forecasts, BenchResult, BenchSpec, Method};
pub use forecast::{
    extract_increments, extract_residuals, forecast, mean_path, quantile_bands, robust_scale,
    simulate_paths, ForecastBands, ForecastPaths, ForecastResult, NoiseMode, NoisePools,
    PathEnsemble, ResidualSource,
};
pub use model::{
    build_cell_geometry, build_structure, design_row, transition_power_apply, window_weights,
    CellGeometry, ModelStructure,
};
pub use pipeline::{fit_series, FitOptions, FitResult};
pub use series::TimeSeries;
pub use solver::{
    center, optimality_residual, solve, ProblemSpec, SolverConfig, SolverStats, StateInit,
    StateSequence,
};
pub use synth::{synth_generate, SynthConfig, SynthOutput};

/// Errors for every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Seasonal period must be at least 2.
    #[error("invalid period {0}, must be >= 2")]
    InvalidPeriod(usize),
    /// A parameter left its documented domain.
    #[error("invalid parameter {name}: {value} ({requirement})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    /// Vector or series length differs from what the operation requires.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// Fewer observed values than the operation needs.
    #[error("insufficient data: need at least {needed} observed values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    /// The operation requires a fully observed series.
    #[error("series has missing values (first at index {0}); this operation requires a fully observed series")]
    MissingValues(usize),
    /// An empirical pool needed for resampling is empty.
    #[error("empty {0} pool")]
    EmptyPool(&'static str),
    /// Numerical failure in a linear solve.
    #[error("linear solve failed: {0}")]
    LinearSolve(&'static str),
    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
