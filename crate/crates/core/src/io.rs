//! Data ingestion and result serialization.
//!
//! Series files are CSV with a `timestamp,value` header (column names
//! remappable for other layouts); rows are assumed uniformly spaced in file
//! order. Results are JSON documents that embed the full run manifest plus
//! flat companion CSVs for plotting. All writes are atomic
//! (write-temp-then-rename), and serialized documents contain no
//! nondeterministic fields, so re-running from a manifest reproduces the
//! output byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{AnomalyReport, Decomposition};
use crate::forecast::ForecastResult;
use crate::pipeline::{fit_series, FitOptions, FitResult};
use crate::series::TimeSeries;
use crate::solver::{SolverStats, StateSequence};
use crate::synth::{synth_generate, SynthConfig};
use crate::{Error, Result};

/// Column names used when reading a series CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvMapping {
    pub timestamp_column: String,
    pub value_column: String,
}

impl Default for CsvMapping {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".to_string(),
            value_column: "value".to_string(),
        }
    }
}

/// Read a series CSV. Empty or non-numeric value fields become missing
/// observations; duplicate or decreasing numeric timestamps are rejected
/// with their line numbers.
pub fn load_csv(path: &Path, mapping: &CsvMapping) -> Result<TimeSeries> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".to_string(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let ts_col = columns
        .iter()
        .position(|c| *c == mapping.timestamp_column)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!(
                "malformed header: missing column '{}' in '{header}'",
                mapping.timestamp_column
            ),
        })?;
    let val_col = columns
        .iter()
        .position(|c| *c == mapping.value_column)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!(
                "malformed header: missing column '{}' in '{header}'",
                mapping.value_column
            ),
        })?;

    let mut values: Vec<Option<f64>> = Vec::new();
    let mut prev_stamp: Option<(String, Option<f64>, usize)> = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() <= ts_col.max(val_col) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least {} fields", ts_col.max(val_col) + 1),
            });
        }
        let stamp_raw = fields[ts_col].to_string();
        let stamp_num = stamp_raw.parse::<f64>().ok();
        if let Some((prev_raw, prev_num, prev_line)) = &prev_stamp {
            let bad = match (prev_num, stamp_num) {
                (Some(a), Some(b)) => b <= *a,
                _ => stamp_raw == *prev_raw,
            };
            if bad {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "timestamp '{stamp_raw}' does not increase past '{prev_raw}' (line {prev_line})"
                    ),
                });
            }
        }
        prev_stamp = Some((stamp_raw, stamp_num, line_no));

        let field = fields[val_col];
        values.push(if field.is_empty() {
            None
        } else {
            field.parse::<f64>().ok()
        });
    }
    if values.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".to_string(),
        });
    }
    TimeSeries::from_options(&values)
}

fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Write a series as `timestamp,value` CSV (timestamps are the indices;
/// missing values leave the field empty).
pub fn save_series_csv(ts: &TimeSeries, path: &Path) -> Result<()> {
    let mut out = String::from("timestamp,value\n");
    for t in 0..ts.len() {
        match ts.value(t) {
            Some(v) => out.push_str(&format!("{t},{v}\n")),
            None => out.push_str(&format!("{t},\n")),
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Where a run's series came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputSpec {
    Csv {
        path: String,
        timestamp_column: String,
        value_column: String,
    },
    Synth(SynthConfig),
    /// Provided in memory (library callers).
    Memory,
}

/// Complete configuration record embedded in every output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub input: InputSpec,
    pub fit: FitOptions,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub forecast: Option<ForecastSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detect_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bench: Option<crate::bench::BenchSpec>,
}

impl RunManifest {
    pub fn new(input: InputSpec, fit: FitOptions) -> Self {
        Self {
            tool: "escells".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            input,
            fit,
            forecast: None,
            detect_fraction: None,
            bench: None,
        }
    }
}

/// Forecast run parameters recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSpec {
    pub horizon: usize,
    pub n_paths: usize,
    pub level: f64,
    pub seed: u64,
    /// Boundary trim applied to the noise pools.
    pub trim: usize,
}

/// Solver statistics as serialized: the objective trace is downsampled and
/// wall time is deliberately omitted (outputs must be reproducible byte for
/// byte from the manifest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStatsDoc {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub objective: f64,
    pub objective_trace: Vec<(usize, f64)>,
}

impl SolverStatsDoc {
    pub fn from_stats(stats: &SolverStats) -> Self {
        let trace = downsample(&stats.objective_trace, 64);
        Self {
            iterations: stats.iterations,
            converged: stats.converged,
            final_residual: stats.final_residual,
            objective: stats.objective,
            objective_trace: trace,
        }
    }
}

fn downsample<T: Clone>(values: &[T], max_len: usize) -> Vec<T> {
    if values.len() <= max_len || max_len == 0 {
        return values.to_vec();
    }
    let stride = values.len().div_ceil(max_len);
    let mut out: Vec<T> = values.iter().step_by(stride).cloned().collect();
    if let Some(last) = values.last() {
        out.push(last.clone());
    }
    out
}

/// Fit output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub manifest: RunManifest,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub raw_states: Vec<Vec<f64>>,
    pub centered_states: Vec<Vec<f64>>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<(usize, f64)>,
    pub increments: Vec<Vec<f64>>,
    pub decomposition: Decomposition,
    pub stats: SolverStatsDoc,
}

impl FitDocument {
    pub fn from_fit(fit: &FitResult, manifest: RunManifest) -> Self {
        Self {
            manifest,
            values: fit.series.raw_values().to_vec(),
            mask: fit.series.mask().to_vec(),
            raw_states: fit
                .raw
                .states()
                .iter()
                .map(|s| s.as_slice().to_vec())
                .collect(),
            centered_states: fit
                .centered
                .states()
                .iter()
                .map(|s| s.as_slice().to_vec())
                .collect(),
            fitted: fit.fitted.clone(),
            residuals: fit.residuals.clone(),
            increments: fit.increments.clone(),
            decomposition: fit.decomposition.clone(),
            stats: SolverStatsDoc::from_stats(&fit.stats),
        }
    }

    pub fn series(&self) -> Result<TimeSeries> {
        TimeSeries::new(self.values.clone(), self.mask.clone())
    }

    pub fn centered(&self) -> StateSequence {
        StateSequence::new(
            self.centered_states
                .iter()
                .map(|s| nalgebra::DVector::from_vec(s.clone()))
                .collect(),
        )
    }
}

/// Forecast output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDocument {
    pub manifest: RunManifest,
    pub result: ForecastResult,
}

/// Anomaly output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyDocument {
    pub manifest: RunManifest,
    pub report: AnomalyReport,
}

/// Imputation output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeDocument {
    pub manifest: RunManifest,
    pub values: Vec<f64>,
    pub filled_indices: Vec<usize>,
}

/// Serialize any document as pretty JSON, atomically.
pub fn write_json<T: Serialize>(doc: &T, path: &Path) -> Result<()> {
    let mut body = serde_json::to_string_pretty(doc)?;
    body.push('\n');
    atomic_write(path, body.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let content = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&content)?)
}

fn companion(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

/// Write the fit JSON plus a `<stem>.decomposition.csv` companion with one
/// row per time index.
pub fn write_fit_outputs(doc: &FitDocument, path: &Path) -> Result<Vec<PathBuf>> {
    write_json(doc, path)?;
    let mut csv = String::from("t,observed,value,level,trend,seasonal,fitted,residual\n");
    let residual_at: std::collections::HashMap<usize, f64> =
        doc.residuals.iter().copied().collect();
    for t in 0..doc.values.len() {
        let observed = doc.mask[t];
        let value = if observed {
            doc.values[t].to_string()
        } else {
            String::new()
        };
        let residual = residual_at
            .get(&t)
            .map(|r| r.to_string())
            .unwrap_or_default();
        csv.push_str(&format!(
            "{t},{},{value},{},{},{},{},{residual}\n",
            observed as u8,
            doc.decomposition.level[t],
            doc.decomposition.trend[t],
            doc.decomposition.seasonal[t],
            doc.fitted[t],
        ));
    }
    let csv_path = companion(path, "decomposition");
    atomic_write(&csv_path, csv.as_bytes())?;
    Ok(vec![path.to_path_buf(), csv_path])
}

/// Write the forecast JSON plus a `<stem>.bands.csv` companion with columns
/// `horizon,mean,inner_lo,inner_hi,outer_lo,outer_hi`.
pub fn write_forecast_outputs(doc: &ForecastDocument, path: &Path) -> Result<Vec<PathBuf>> {
    write_json(doc, path)?;
    let mut csv = String::from("horizon,mean,inner_lo,inner_hi,outer_lo,outer_hi\n");
    let r = &doc.result;
    for k in 0..r.horizon {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            k + 1,
            r.mean.y[k],
            r.bands.inner_lower.y[k],
            r.bands.inner_upper.y[k],
            r.bands.outer_lower[k],
            r.bands.outer_upper[k],
        ));
    }
    let csv_path = companion(path, "bands");
    atomic_write(&csv_path, csv.as_bytes())?;
    Ok(vec![path.to_path_buf(), csv_path])
}

/// Write the anomaly JSON plus a `<stem>.anomalies.csv` companion.
pub fn write_anomaly_outputs(doc: &AnomalyDocument, path: &Path) -> Result<Vec<PathBuf>> {
    write_json(doc, path)?;
    let mut csv = String::from("t\n");
    for t in &doc.report.indices {
        csv.push_str(&format!("{t}\n"));
    }
    let csv_path = companion(path, "anomalies");
    atomic_write(&csv_path, csv.as_bytes())?;
    Ok(vec![path.to_path_buf(), csv_path])
}

/// Write the imputation JSON plus a completed-series CSV companion.
pub fn write_impute_outputs(doc: &ImputeDocument, path: &Path) -> Result<Vec<PathBuf>> {
    write_json(doc, path)?;
    let mut csv = String::from("timestamp,value,filled\n");
    for (t, v) in doc.values.iter().enumerate() {
        let filled = doc.filled_indices.binary_search(&t).is_ok() as u8;
        csv.push_str(&format!("{t},{v},{filled}\n"));
    }
    let csv_path = companion(path, "completed");
    atomic_write(&csv_path, csv.as_bytes())?;
    Ok(vec![path.to_path_buf(), csv_path])
}

/// Resolve the manifest's input back into a series.
pub fn load_input(input: &InputSpec) -> Result<TimeSeries> {
    match input {
        InputSpec::Csv {
            path,
            timestamp_column,
            value_column,
        } => load_csv(
            Path::new(path),
            &CsvMapping {
                timestamp_column: timestamp_column.clone(),
                value_column: value_column.clone(),
            },
        ),
        InputSpec::Synth(config) => Ok(synth_generate(config)?.series),
        InputSpec::Memory => Err(Error::Parse {
            line: 0,
            message: "manifest input was provided in memory and cannot be reloaded".to_string(),
        }),
    }
}

/// Re-run a fit from its manifest alone. Outputs are byte-identical to the
/// original because everything downstream of the input is deterministic.
pub fn run_fit_from_manifest(manifest: &RunManifest) -> Result<FitDocument> {
    let ts = load_input(&manifest.input)?;
    let fit = fit_series(&ts, &manifest.fit)?;
    Ok(FitDocument::from_fit(&fit, manifest.clone()))
}
