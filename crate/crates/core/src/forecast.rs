//! Sampling-based forecasting from a fitted state sequence.
//!
//! Empirical pools of one-step residuals and state increments are resampled
//! to simulate forward paths conditioned on the final state. Each path
//! iterates `x <- A x + g*` and emits `w . x`; the inner band reflects
//! increment uncertainty only, the outer band adds resampled residuals to the
//! emitted value.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::ModelStructure;
use crate::series::TimeSeries;
use crate::solver::StateSequence;
use crate::{Error, Result};

/// Empirical noise pools extracted from a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePools {
    /// One-step residuals at observed times.
    pub residuals: Vec<f64>,
    /// State increments (whole vectors, resampled jointly).
    pub increments: Vec<Vec<f64>>,
}

impl NoisePools {
    /// Build pools from a centered fit, excluding the first and last `trim`
    /// time points (boundary windows are only partially constrained).
    pub fn from_fit(
        ts: &TimeSeries,
        centered: &StateSequence,
        structure: &ModelStructure,
        trim: usize,
    ) -> Self {
        let t_last = centered.len().saturating_sub(1);
        let keep = |t: usize| t >= trim && t + trim <= t_last;
        let residuals = extract_residuals(ts, centered, structure)
            .into_iter()
            .filter(|(t, _)| keep(*t))
            .map(|(_, e)| e)
            .collect();
        let increments = extract_increments(centered, structure)
            .into_iter()
            .enumerate()
            .filter(|(idx, _)| keep(idx + 1))
            .map(|(_, g)| g.as_slice().to_vec())
            .collect();
        Self {
            residuals,
            increments,
        }
    }
}

/// One-step residuals `eps_t = y_t - w . xcheck_t` for each observed `t`.
/// `xcheck_t` is the state whose measurement is `y_t`, so this is the fit
/// residual at `t`; missing times are excluded.
pub fn extract_residuals(
    ts: &TimeSeries,
    centered: &StateSequence,
    structure: &ModelStructure,
) -> Vec<(usize, f64)> {
    let upto = ts.len().min(centered.len());
    (0..upto)
        .filter_map(|t| {
            let y = ts.value(t)?;
            Some((t, y - structure.measure(centered.state(t))))
        })
        .collect()
}

/// Smoothing increments `g_t = xcheck_t - A xcheck_{t-1}` for `t = 1..=T`.
pub fn extract_increments(
    centered: &StateSequence,
    structure: &ModelStructure,
) -> Vec<DVector<f64>> {
    (1..centered.len())
        .map(|t| centered.state(t) - structure.a() * centered.state(t - 1))
        .collect()
}

/// Which noise sources a simulation injects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Increment resampling only.
    GOnly,
    /// Increments plus residuals added to the emitted value.
    GAndEps,
}

/// Source of the additive residual term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualSource {
    /// Resample the empirical pool.
    Empirical,
    /// Zero-mean Gaussian with a robust (MAD-based) scale of the pool.
    GaussianRobustScale,
}

/// Simulated paths, stored per horizon step: `values[k][path]`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub horizon: usize,
    pub n_paths: usize,
    pub level: Vec<Vec<f64>>,
    pub trend: Vec<Vec<f64>>,
    pub seasonal: Vec<Vec<f64>>,
    /// Emitted `w . x` per path (increment uncertainty only).
    pub y_state: Vec<Vec<f64>>,
    /// Emitted value including the residual term.
    pub y_full: Vec<Vec<f64>>,
}

/// Median absolute deviation scaled to the normal distribution.
pub fn robust_scale(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let med = median(values);
    let devs: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    1.4826 * median(&devs)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Simulate a path ensemble from `final_state`.
///
/// Each path's random stream is derived from `(seed, path index)`, so the
/// ensemble is reproducible regardless of execution order or thread count.
pub fn simulate_paths(
    final_state: &DVector<f64>,
    structure: &ModelStructure,
    pools: &NoisePools,
    horizon: usize,
    n_paths: usize,
    mode: NoiseMode,
    residual_source: ResidualSource,
    seed: u64,
) -> Result<PathEnsemble> {
    if horizon < 1 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: horizon as f64,
            requirement: ">= 1",
        });
    }
    if n_paths < 1 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            value: n_paths as f64,
            requirement: ">= 1",
        });
    }
    if final_state.len() != structure.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: structure.state_dim(),
            got: final_state.len(),
        });
    }
    if pools.increments.is_empty() {
        return Err(Error::EmptyPool("increment"));
    }
    if mode == NoiseMode::GAndEps && pools.residuals.is_empty() {
        return Err(Error::EmptyPool("residual"));
    }

    let n = structure.state_dim();
    let increments: Vec<DVector<f64>> = pools
        .increments
        .iter()
        .map(|g| DVector::from_vec(g.clone()))
        .collect();
    for g in &increments {
        if g.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.len(),
            });
        }
    }
    let residual_sigma = robust_scale(&pools.residuals);

    let paths: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64 + 1);
            let mut x = final_state.clone();
            let mut level = Vec::with_capacity(horizon);
            let mut trend = Vec::with_capacity(horizon);
            let mut seasonal = Vec::with_capacity(horizon);
            let mut y_state = Vec::with_capacity(horizon);
            let mut y_full = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let g = &increments[rng.random_range(0..increments.len())];
                x = structure.a() * &x + g;
                level.push(x[0]);
                trend.push(x[1]);
                seasonal.push(x[n - 1]);
                let ys = structure.measure(&x);
                y_state.push(ys);
                let yf = match mode {
                    NoiseMode::GOnly => ys,
                    NoiseMode::GAndEps => match residual_source {
                        ResidualSource::Empirical => {
                            ys + pools.residuals[rng.random_range(0..pools.residuals.len())]
                        }
                        ResidualSource::GaussianRobustScale => {
                            let z: f64 = rng.sample(rand_distr::StandardNormal);
                            ys + residual_sigma * z
                        }
                    },
                };
                y_full.push(yf);
            }
            (level, trend, seasonal, y_state, y_full)
        })
        .collect();

    let mut out = PathEnsemble {
        horizon,
        n_paths,
        level: vec![Vec::with_capacity(n_paths); horizon],
        trend: vec![Vec::with_capacity(n_paths); horizon],
        seasonal: vec![Vec::with_capacity(n_paths); horizon],
        y_state: vec![Vec::with_capacity(n_paths); horizon],
        y_full: vec![Vec::with_capacity(n_paths); horizon],
    };
    for (level, trend, seasonal, y_state, y_full) in &paths {
        for k in 0..horizon {
            out.level[k].push(level[k]);
            out.trend[k].push(trend[k]);
            out.seasonal[k].push(seasonal[k]);
            out.y_state[k].push(y_state[k]);
            out.y_full[k].push(y_full[k]);
        }
    }
    Ok(out)
}

/// Per-horizon sequences for each component and the observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPaths {
    pub level: Vec<f64>,
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub y: Vec<f64>,
}

/// Deterministic propagation of the final state (no noise). The seasonal
/// component is the slot entering the measurement, so
/// `y = level + trend + seasonal` holds exactly at every horizon.
pub fn mean_path(
    final_state: &DVector<f64>,
    structure: &ModelStructure,
    horizon: usize,
) -> ForecastPaths {
    let n = structure.state_dim();
    let mut x = final_state.clone();
    let mut out = ForecastPaths {
        level: Vec::with_capacity(horizon),
        trend: Vec::with_capacity(horizon),
        seasonal: Vec::with_capacity(horizon),
        y: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        x = structure.a() * &x;
        out.level.push(x[0]);
        out.trend.push(x[1]);
        out.seasonal.push(x[n - 1]);
        out.y.push(structure.measure(&x));
    }
    out
}

/// Empirical bands computed from an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBands {
    pub inner_lower: ForecastPaths,
    pub inner_upper: ForecastPaths,
    pub outer_lower: Vec<f64>,
    pub outer_upper: Vec<f64>,
}

/// Zero-based sorted indices of the nearest-rank quantile pair for a
/// two-sided band at `level`: lower-nearest-rank below, upper-nearest-rank
/// above.
pub fn nearest_rank_bounds(n: usize, level: f64) -> (usize, usize) {
    let q = (1.0 - level) / 2.0;
    let lo_rank = ((q * n as f64).floor() as usize + 1).min(n);
    let hi_rank = (((1.0 - q) * n as f64).ceil() as usize).max(1).min(n);
    (lo_rank - 1, hi_rank - 1)
}

fn band_of(values: &[Vec<f64>], level: f64) -> (Vec<f64>, Vec<f64>) {
    let mut lower = Vec::with_capacity(values.len());
    let mut upper = Vec::with_capacity(values.len());
    for step in values {
        let mut sorted = step.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (lo, hi) = nearest_rank_bounds(sorted.len(), level);
        lower.push(sorted[lo]);
        upper.push(sorted[hi]);
    }
    (lower, upper)
}

/// Empirical quantile bands at `level` for every component and for the
/// observable, per horizon.
pub fn quantile_bands(ensemble: &PathEnsemble, level: f64) -> Result<ForecastBands> {
    if ensemble.n_paths == 0 || ensemble.y_state.iter().any(|s| s.is_empty()) {
        return Err(Error::EmptyPool("ensemble"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter {
            name: "level",
            value: level,
            requirement: "in (0, 1)",
        });
    }
    let (level_lo, level_hi) = band_of(&ensemble.level, level);
    let (trend_lo, trend_hi) = band_of(&ensemble.trend, level);
    let (seasonal_lo, seasonal_hi) = band_of(&ensemble.seasonal, level);
    let (ys_lo, ys_hi) = band_of(&ensemble.y_state, level);
    let (mut yf_lo, mut yf_hi) = band_of(&ensemble.y_full, level);
    // The outer band includes every noise source of the inner band, so the
    // population quantiles nest; remove finite-sample quantile crossings by
    // taking the hull.
    for k in 0..yf_lo.len() {
        yf_lo[k] = yf_lo[k].min(ys_lo[k]);
        yf_hi[k] = yf_hi[k].max(ys_hi[k]);
    }
    Ok(ForecastBands {
        inner_lower: ForecastPaths {
            level: level_lo,
            trend: trend_lo,
            seasonal: seasonal_lo,
            y: ys_lo,
        },
        inner_upper: ForecastPaths {
            level: level_hi,
            trend: trend_hi,
            seasonal: seasonal_hi,
            y: ys_hi,
        },
        outer_lower: yf_lo,
        outer_upper: yf_hi,
    })
}

/// A complete forecast: deterministic mean path plus inner (increment-only)
/// and outer (increment + residual) bands at `level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub horizon: usize,
    pub level: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub mean: ForecastPaths,
    pub bands: ForecastBands,
}

/// Simulate and summarize a forecast conditioned on `final_state`.
pub fn forecast(
    final_state: &DVector<f64>,
    structure: &ModelStructure,
    pools: &NoisePools,
    horizon: usize,
    n_paths: usize,
    level: f64,
    residual_source: ResidualSource,
    seed: u64,
) -> Result<ForecastResult> {
    let ensemble = simulate_paths(
        final_state,
        structure,
        pools,
        horizon,
        n_paths,
        NoiseMode::GAndEps,
        residual_source,
        seed,
    )?;
    let bands = quantile_bands(&ensemble, level)?;
    Ok(ForecastResult {
        horizon,
        level,
        n_paths,
        seed,
        mean: mean_path(final_state, structure, horizon),
        bands,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_structure;
    use approx::assert_relative_eq;

    fn zero_pools(n: usize) -> NoisePools {
        NoisePools {
            residuals: vec![0.0; 4],
            increments: vec![vec![0.0; n]; 4],
        }
    }

    #[test]
    fn residuals_zero_on_exact_fit() {
        let s = build_structure(2).unwrap();
        let states: Vec<DVector<f64>> = (0..6)
            .map(|i| DVector::from_vec(vec![i as f64, 0.5, 1.0, -1.0]))
            .collect();
        let seq = StateSequence::new(states.clone());
        let values: Vec<f64> = states.iter().map(|x| s.measure(x)).collect();
        let ts = TimeSeries::complete(values).unwrap();
        let res = extract_residuals(&ts, &seq, &s);
        assert_eq!(res.len(), 6);
        for (_, e) in res {
            assert_relative_eq!(e, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn residuals_skip_missing() {
        let s = build_structure(2).unwrap();
        let seq = StateSequence::zeros(5, 4);
        let mut values = vec![Some(1.0); 5];
        values[2] = None;
        let ts = TimeSeries::from_options(&values).unwrap();
        let res = extract_residuals(&ts, &seq, &s);
        assert_eq!(res.len(), 4);
        assert!(res.iter().all(|(t, _)| *t != 2));
    }

    #[test]
    fn residual_arithmetic() {
        let s = build_structure(2).unwrap();
        // State whose measurement is y_t: w . (1, 1, 0, 2) = 4, y = 5 -> 1.
        let seq = StateSequence::new(vec![DVector::from_vec(vec![1.0, 1.0, 0.0, 2.0])]);
        let ts = TimeSeries::complete(vec![5.0]).unwrap();
        let res = extract_residuals(&ts, &seq, &s);
        assert_eq!(res, vec![(0, 1.0)]);
    }

    #[test]
    fn increments_zero_on_consistent_dynamics() {
        let s = build_structure(2).unwrap();
        let mut states = vec![DVector::from_vec(vec![1.0, 0.3, 0.5, -0.5])];
        for _ in 1..7 {
            let next = s.a() * states.last().unwrap();
            states.push(next);
        }
        let seq = StateSequence::new(states);
        let inc = extract_increments(&seq, &s);
        assert_eq!(inc.len(), 6);
        for g in inc {
            assert_relative_eq!(g.amax(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn increment_arithmetic() {
        let s = build_structure(2).unwrap();
        let prev = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let next = DVector::from_vec(vec![4.0, 2.0, 4.0, 3.0]);
        let seq = StateSequence::new(vec![prev, next]);
        let inc = extract_increments(&seq, &s);
        // A. (1,2,3,4) = (3,2,4,3), so the increment is (1,0,0,0).
        assert_eq!(inc[0].as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_pools_collapse_to_deterministic_propagation() {
        let s = build_structure(2).unwrap();
        let x = DVector::from_vec(vec![2.0, 0.1, 0.5, -0.5]);
        let ens = simulate_paths(
            &x,
            &s,
            &zero_pools(4),
            6,
            8,
            NoiseMode::GAndEps,
            ResidualSource::Empirical,
            99,
        )
        .unwrap();
        let det = mean_path(&x, &s, 6);
        for k in 0..6 {
            for p in 0..8 {
                assert_relative_eq!(ens.y_full[k][p], det.y[k], epsilon = 1e-14);
                assert_relative_eq!(ens.level[k][p], det.level[k], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical_across_thread_counts() {
        let s = build_structure(2).unwrap();
        let x = DVector::from_vec(vec![2.0, 0.1, 0.5, -0.5]);
        let pools = NoisePools {
            residuals: vec![-0.5, 0.2, 0.9, -0.1],
            increments: vec![
                vec![0.1, 0.0, 0.0, 0.0],
                vec![-0.1, 0.01, 0.0, 0.0],
                vec![0.0, 0.0, 0.05, -0.05],
            ],
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                simulate_paths(
                    &x,
                    &s,
                    &pools,
                    10,
                    64,
                    NoiseMode::GAndEps,
                    ResidualSource::Empirical,
                    1234,
                )
                .unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        for k in 0..10 {
            for p in 0..64 {
                assert_eq!(a.y_full[k][p].to_bits(), b.y_full[k][p].to_bits());
            }
        }
    }

    #[test]
    fn empty_pools_are_errors() {
        let s = build_structure(2).unwrap();
        let x = DVector::zeros(4);
        let empty = NoisePools {
            residuals: vec![],
            increments: vec![],
        };
        assert!(matches!(
            simulate_paths(&x, &s, &empty, 5, 4, NoiseMode::GOnly, ResidualSource::Empirical, 0),
            Err(Error::EmptyPool("increment"))
        ));
        let no_res = NoisePools {
            residuals: vec![],
            increments: vec![vec![0.0; 4]],
        };
        assert!(matches!(
            simulate_paths(&x, &s, &no_res, 5, 4, NoiseMode::GAndEps, ResidualSource::Empirical, 0),
            Err(Error::EmptyPool("residual"))
        ));
        // g-only mode tolerates an empty residual pool.
        assert!(simulate_paths(
            &x,
            &s,
            &no_res,
            5,
            4,
            NoiseMode::GOnly,
            ResidualSource::Empirical,
            0
        )
        .is_ok());
        assert!(matches!(
            simulate_paths(&x, &s, &no_res, 0, 4, NoiseMode::GOnly, ResidualSource::Empirical, 0),
            Err(Error::InvalidParameter { name: "horizon", .. })
        ));
    }

    #[test]
    fn quantile_band_degenerate_ensemble() {
        let ens = PathEnsemble {
            horizon: 2,
            n_paths: 3,
            level: vec![vec![1.0; 3]; 2],
            trend: vec![vec![0.0; 3]; 2],
            seasonal: vec![vec![0.0; 3]; 2],
            y_state: vec![vec![7.5; 3]; 2],
            y_full: vec![vec![7.5; 3]; 2],
        };
        let bands = quantile_bands(&ens, 0.99).unwrap();
        assert_eq!(bands.inner_lower.y, vec![7.5, 7.5]);
        assert_eq!(bands.inner_upper.y, vec![7.5, 7.5]);
    }

    #[test]
    fn nearest_rank_examples() {
        // 4 paths {1,2,3,4} at level 0.5 -> band [2, 3].
        let (lo, hi) = nearest_rank_bounds(4, 0.5);
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(sorted[lo], 2.0);
        assert_eq!(sorted[hi], 3.0);
        // 99% level leaves 0.5% mass per side.
        let (lo, hi) = nearest_rank_bounds(10_000, 0.99);
        assert_eq!(lo, 50);
        assert_eq!(hi, 9949);
    }

    #[test]
    fn inner_band_nested_in_outer() {
        let s = build_structure(2).unwrap();
        let x = DVector::from_vec(vec![5.0, 0.05, 0.4, -0.4]);
        let pools = NoisePools {
            residuals: vec![-1.2, -0.4, -0.1, 0.0, 0.1, 0.5, 1.3],
            increments: vec![
                vec![0.2, 0.01, 0.0, 0.0],
                vec![-0.2, -0.01, 0.02, -0.02],
                vec![0.05, 0.0, -0.01, 0.01],
                vec![0.0, 0.0, 0.0, 0.0],
            ],
        };
        let ens = simulate_paths(
            &x,
            &s,
            &pools,
            12,
            2000,
            NoiseMode::GAndEps,
            ResidualSource::Empirical,
            7,
        )
        .unwrap();
        let bands = quantile_bands(&ens, 0.99).unwrap();
        for k in 0..12 {
            assert!(bands.outer_lower[k] <= bands.inner_lower.y[k]);
            assert!(bands.outer_upper[k] >= bands.inner_upper.y[k]);
        }
    }

    #[test]
    fn component_additivity_is_exact() {
        let s = build_structure(3).unwrap();
        let x = DVector::from_vec(vec![5.0, -0.2, 0.4, -0.1, -0.3]);
        let pools = NoisePools {
            residuals: vec![0.3, -0.3],
            increments: vec![vec![0.1, 0.02, -0.05, 0.0, 0.05], vec![0.0; 5]],
        };
        let ens = simulate_paths(
            &x,
            &s,
            &pools,
            8,
            16,
            NoiseMode::GOnly,
            ResidualSource::Empirical,
            3,
        )
        .unwrap();
        for k in 0..8 {
            for p in 0..16 {
                let sum = ens.level[k][p] + ens.trend[k][p] + ens.seasonal[k][p];
                assert_eq!(sum.to_bits(), ens.y_state[k][p].to_bits());
            }
        }
    }

    #[test]
    fn gaussian_residual_source_is_deterministic_too() {
        let s = build_structure(2).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let pools = NoisePools {
            residuals: vec![-0.8, -0.1, 0.0, 0.2, 0.9],
            increments: vec![vec![0.1, 0.0, 0.0, 0.0]],
        };
        let run = || {
            simulate_paths(
                &x,
                &s,
                &pools,
                5,
                32,
                NoiseMode::GAndEps,
                ResidualSource::GaussianRobustScale,
                42,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        for k in 0..5 {
            for p in 0..32 {
                assert_eq!(a.y_full[k][p].to_bits(), b.y_full[k][p].to_bits());
            }
        }
    }

    #[test]
    fn band_stability_under_ensemble_growth() {
        let s = build_structure(2).unwrap();
        let x = DVector::from_vec(vec![5.0, 0.0, 0.3, -0.3]);
        let pools = NoisePools {
            residuals: (0..40).map(|i| ((i * 37 % 83) as f64 / 83.0 - 0.5) * 2.0).collect(),
            increments: (0..40)
                .map(|i| {
                    let v = ((i * 29 % 71) as f64 / 71.0 - 0.5) * 0.3;
                    vec![v, v * 0.1, -v * 0.5, v * 0.5]
                })
                .collect(),
        };
        let h = 10;
        let run = |n_paths: usize| {
            let ens = simulate_paths(
                &x,
                &s,
                &pools,
                h,
                n_paths,
                NoiseMode::GAndEps,
                ResidualSource::Empirical,
                11,
            )
            .unwrap();
            quantile_bands(&ens, 0.99).map(|b| (b, ens)).unwrap()
        };
        let (b10, e10) = run(10_000);
        let (b20, _) = run(20_000);
        // Monte Carlo standard error of the empirical quantile, estimated
        // from the order-statistics spacing around the rank.
        let se = |sorted: &mut Vec<f64>, level: f64, upper: bool| {
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            let (lo, hi) = nearest_rank_bounds(n, level);
            let idx = if upper { hi } else { lo };
            let q = idx as f64 / n as f64;
            let half = (n / 200).max(2);
            let a = sorted[idx.saturating_sub(half)];
            let b = sorted[(idx + half).min(n - 1)];
            let density = ((idx + half).min(n - 1) - idx.saturating_sub(half)) as f64
                / (n as f64 * (b - a).max(1e-12));
            (q * (1.0 - q) / n as f64).sqrt() / density.max(1e-12)
        };
        for k in 0..h {
            let mut vals = e10.y_full[k].clone();
            let se_lo = se(&mut vals, 0.99, false);
            let se_hi = se(&mut vals, 0.99, true);
            let d_lo = (b10.outer_lower[k] - b20.outer_lower[k]).abs();
            let d_hi = (b10.outer_upper[k] - b20.outer_upper[k]).abs();
            assert!(
                d_lo <= 3.0 * se_lo * 1.5 + 1e-12,
                "lower band unstable at step {k}: diff {d_lo}, se {se_lo}"
            );
            assert!(
                d_hi <= 3.0 * se_hi * 1.5 + 1e-12,
                "upper band unstable at step {k}: diff {d_hi}, se {se_hi}"
            );
        }
    }
}
