//! Train/test forecast comparison across methods with sliding-MAPE scoring.

use serde::{Deserialize, Serialize};

use crate::analytics::mape_sliding;
use crate::baselines::{hw_filter, hw_fit, rhw_clean, HwFitOptions, RobustFilterParams};
use crate::forecast::{mean_path, median};
use crate::model::build_structure;
use crate::pipeline::{fit_series, FitOptions};
use crate::series::TimeSeries;
use crate::{Error, Result};

/// A forecasting method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Hw,
    Rhw,
    EsCells,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Hw => "hw",
            Method::Rhw => "rhw",
            Method::EsCells => "escells",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hw" => Ok(Method::Hw),
            "rhw" => Ok(Method::Rhw),
            "escells" | "es-cells" | "es" => Ok(Method::EsCells),
            other => Err(Error::Parse {
                line: 0,
                message: format!("unknown method '{other}' (expected hw, rhw, escells)"),
            }),
        }
    }
}

/// Benchmark layout: fit on `[0, split)`, forecast `horizon` steps, score
/// with a trailing MAPE window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub methods: Vec<Method>,
    pub split: usize,
    pub horizon: usize,
    pub window: usize,
    /// Hand-tuned gains for HW/RHW instead of fitting.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hand_params: Option<(f64, f64, f64)>,
    pub seed: u64,
}

/// Per-method score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    pub forecast: Vec<f64>,
    /// Sliding MAPE; entry `i` covers the window ending at position
    /// `i + window - 1` of the evaluation segment.
    pub mape: Vec<Option<f64>>,
    pub median_mape: f64,
}

/// Pairwise comparison against the reference method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapeRatio {
    pub baseline: Method,
    pub reference: Method,
    /// Median over positions of baseline MAPE / reference MAPE.
    pub median_ratio: f64,
    /// Share of positions where the reference is at or below the baseline.
    pub reference_wins: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub scores: Vec<MethodScore>,
    /// Ratios of each baseline against es-cells, when es-cells ran.
    pub ratios: Vec<MapeRatio>,
}

/// Score a set of named forecasts against the actual segment.
pub fn score_forecasts(
    actual: &[f64],
    forecasts: &[(Method, Vec<f64>)],
    window: usize,
) -> Result<BenchResult> {
    let mut scores = Vec::with_capacity(forecasts.len());
    for (method, forecast) in forecasts {
        let mape = mape_sliding(actual, forecast, window)?;
        let defined: Vec<f64> = mape.iter().flatten().copied().collect();
        let median_mape = if defined.is_empty() {
            f64::NAN
        } else {
            median(&defined)
        };
        scores.push(MethodScore {
            method: *method,
            forecast: forecast.clone(),
            mape,
            median_mape,
        });
    }

    let mut ratios = Vec::new();
    if let Some(reference) = scores.iter().find(|s| s.method == Method::EsCells) {
        for baseline in scores.iter().filter(|s| s.method != Method::EsCells) {
            let mut pair: Vec<(f64, f64)> = Vec::new();
            for (b, r) in baseline.mape.iter().zip(&reference.mape) {
                if let (Some(b), Some(r)) = (b, r) {
                    pair.push((*b, *r));
                }
            }
            if pair.is_empty() {
                continue;
            }
            let ratio_values: Vec<f64> = pair
                .iter()
                .map(|(b, r)| if *r > 0.0 { b / r } else { f64::INFINITY })
                .collect();
            let finite: Vec<f64> = ratio_values.iter().copied().filter(|v| v.is_finite()).collect();
            let median_ratio = if finite.is_empty() {
                f64::INFINITY
            } else {
                median(&finite)
            };
            let wins = pair.iter().filter(|(b, r)| r <= b).count() as f64 / pair.len() as f64;
            ratios.push(MapeRatio {
                baseline: baseline.method,
                reference: Method::EsCells,
                median_ratio,
                reference_wins: wins,
            });
        }
    }
    Ok(BenchResult { scores, ratios })
}

fn slice_series(ts: &TimeSeries, range: std::ops::Range<usize>) -> Result<TimeSeries> {
    let values: Vec<Option<f64>> = range.map(|t| ts.value(t)).collect();
    TimeSeries::from_options(&values)
}

/// Fit each method on the pre-split segment and forecast the post-split
/// segment with its mean path. Mean paths are deterministic, so the table is
/// reproducible by construction.
pub fn run_benchmark(
    ts: &TimeSeries,
    fit_options: &FitOptions,
    spec: &BenchSpec,
) -> Result<BenchResult> {
    let needed = fit_options.period + 2;
    if spec.split < needed {
        return Err(Error::InsufficientData {
            needed,
            got: spec.split,
        });
    }
    if ts.len() < spec.split + spec.horizon {
        return Err(Error::InsufficientData {
            needed: spec.split + spec.horizon,
            got: ts.len(),
        });
    }
    if spec.horizon < spec.window {
        return Err(Error::InsufficientData {
            needed: spec.window,
            got: spec.horizon,
        });
    }
    let train = slice_series(ts, 0..spec.split)?;
    let eval = slice_series(ts, spec.split..spec.split + spec.horizon)?;
    eval.require_complete()?;
    let actual: Vec<f64> = (0..eval.len()).map(|t| eval.value(t).unwrap()).collect();

    let structure = build_structure(fit_options.period)?;
    let hw_options = HwFitOptions {
        fixed: spec.hand_params,
    };

    let mut forecasts: Vec<(Method, Vec<f64>)> = Vec::new();
    for method in &spec.methods {
        let forecast = match method {
            Method::EsCells => {
                let fit = fit_series(&train, fit_options)?;
                mean_path(fit.centered.last(), &fit.structure, spec.horizon).y
            }
            Method::Hw => {
                let (params, _) = hw_fit(&train, &structure, &hw_options)?;
                let out = hw_filter(&train, &structure, &params)?;
                let aligned = structure.apply_inverse(out.states.last().expect("non-empty"))?;
                mean_path(&aligned, &structure, spec.horizon).y
            }
            Method::Rhw => {
                let (pre_params, _) = hw_fit(&train, &structure, &hw_options)?;
                let cleaned = rhw_clean(
                    &train,
                    &structure,
                    &pre_params,
                    &RobustFilterParams::default(),
                )?;
                let (params, _) = hw_fit(&cleaned, &structure, &hw_options)?;
                let out = hw_filter(&cleaned, &structure, &params)?;
                let aligned = structure.apply_inverse(out.states.last().expect("non-empty"))?;
                mean_path(&aligned, &structure, spec.horizon).y
            }
        };
        forecasts.push((*method, forecast));
    }
    score_forecasts(&actual, &forecasts, spec.window)
}
