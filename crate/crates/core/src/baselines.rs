//! Classic Holt-Winters filtering, fitting, and forecasting, plus the robust
//! pre-filtered variant used as comparison baselines.
//!
//! The filter runs the single-source-of-error recursion with gain
//! `g = (alpha, beta, gamma, 0, ...)`: the one-step prediction at `t` reads
//! the pre-update state, and the post-update state absorbs `y_t` through `g`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::forecast::{forecast, ForecastResult, NoisePools, ResidualSource};
use crate::model::ModelStructure;
use crate::series::TimeSeries;
use crate::{Error, Result};

/// Smoothing parameters and initial state for the classic filter.
#[derive(Debug, Clone, PartialEq)]
pub struct HwParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// State one step before the first observation (its measurement is the
    /// prediction of `y_0`).
    pub x0: DVector<f64>,
}

impl HwParams {
    fn validate(&self, structure: &ModelStructure) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    requirement: "in [0, 1]",
                });
            }
        }
        if self.x0.len() != structure.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: structure.state_dim(),
                got: self.x0.len(),
            });
        }
        Ok(())
    }
}

/// Robust pre-filter controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustFilterParams {
    /// Initial residual scale.
    pub sigma0: f64,
    /// Exponential-smoothing rate of the scale estimate.
    pub lambda_sigma: f64,
    /// Clipping constant in units of the running scale.
    pub huber_k: f64,
}

impl Default for RobustFilterParams {
    fn default() -> Self {
        Self {
            sigma0: 0.05,
            lambda_sigma: 0.01,
            huber_k: 2.0,
        }
    }
}

/// Filter output: post-update states, one-step predictions, residuals.
#[derive(Debug, Clone)]
pub struct HwFilterOutput {
    /// `states[t]` is the state after absorbing `y_t`.
    pub states: Vec<DVector<f64>>,
    /// `predictions[t] = w . (pre-update state at t)`.
    pub predictions: Vec<f64>,
    /// `residuals[t] = y_t - predictions[t]`.
    pub residuals: Vec<f64>,
}

/// Run the Holt-Winters recursion over a fully observed series.
pub fn hw_filter(
    ts: &TimeSeries,
    structure: &ModelStructure,
    params: &HwParams,
) -> Result<HwFilterOutput> {
    ts.require_complete()?;
    params.validate(structure)?;
    let g = structure.gain(params.alpha, params.beta, params.gamma);
    let mut z = params.x0.clone();
    let mut states = Vec::with_capacity(ts.len());
    let mut predictions = Vec::with_capacity(ts.len());
    let mut residuals = Vec::with_capacity(ts.len());
    for t in 0..ts.len() {
        let y = ts.value(t).expect("complete series");
        let pred = structure.measure(&z);
        let eps = y - pred;
        predictions.push(pred);
        residuals.push(eps);
        z = structure.a() * &z + &g * eps;
        states.push(z.clone());
    }
    Ok(HwFilterOutput {
        states,
        predictions,
        residuals,
    })
}

/// Heuristic initial state from the first `p + 2` observations: level is
/// their mean, trend the mean first difference, seasonal slots the de-meaned
/// first period aligned so the oldest slot predicts `y_0`.
fn heuristic_x0(ts: &TimeSeries, structure: &ModelStructure) -> DVector<f64> {
    let p = structure.period();
    let n = structure.state_dim();
    let m = (p + 2).min(ts.len());
    let head: Vec<f64> = (0..m).map(|t| ts.value(t).unwrap_or(0.0)).collect();
    let level = head.iter().sum::<f64>() / m as f64;
    let trend = if m >= 2 {
        head.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / (m - 1) as f64
    } else {
        0.0
    };
    let mut x0 = DVector::zeros(n);
    x0[0] = level;
    x0[1] = trend;
    // Slot p-1 (oldest) predicts y_0, slot p-2 predicts y_1, ...
    for j in 0..p.min(ts.len()) {
        if let Some(y) = ts.value(j) {
            x0[2 + p - 1 - j] = y - level;
        }
    }
    x0
}

/// For fixed gains the prediction sequence is affine in `x0`, so the optimal
/// initial state is an exact least-squares solve.
fn least_squares_x0(
    ts: &TimeSeries,
    structure: &ModelStructure,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> DVector<f64> {
    let n = structure.state_dim();
    let g = structure.gain(alpha, beta, gamma);
    // z_{t+1} = (A - g w^T) z_t + g y_t; pred_t = w . z_t.
    let f = structure.a() - &g * structure.w().transpose();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut c = DVector::<f64>::zeros(n);
    let mut normal = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for t in 0..ts.len() {
        let y = ts.value(t).expect("complete series");
        let row = m.tr_mul(structure.w());
        let offset = structure.w().dot(&c);
        normal += &row * row.transpose();
        rhs += &row * (y - offset);
        c = &f * c + &g * y;
        m = &f * m;
    }
    // Unstable gain combinations can overflow the affine recursion; fall
    // back to the heuristic start rather than poisoning the search.
    if normal.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return heuristic_x0(ts, structure);
    }
    // Min-norm solution handles unidentifiable directions (e.g. a constant
    // series leaves seasonal contrasts free).
    let svd = normal.svd(true, true);
    svd.solve(&rhs, 1e-10 * svd.singular_values.max().max(1.0))
        .unwrap_or_else(|_| heuristic_x0(ts, structure))
}

fn sse_for(
    ts: &TimeSeries,
    structure: &ModelStructure,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> (f64, DVector<f64>) {
    let x0 = least_squares_x0(ts, structure, alpha, beta, gamma);
    let params = HwParams {
        alpha,
        beta,
        gamma,
        x0: x0.clone(),
    };
    let out = hw_filter(ts, structure, &params).expect("validated inputs");
    let sse: f64 = out.residuals.iter().map(|r| r * r).sum();
    let sse = if sse.is_finite() { sse } else { f64::MAX };
    (sse, x0)
}

/// Fit controls. With `fixed` set, the gains are taken as given (hand-tuned
/// mode) and only the initial state is solved.
#[derive(Debug, Clone, Default)]
pub struct HwFitOptions {
    pub fixed: Option<(f64, f64, f64)>,
}

/// Golden-section minimization of a univariate function on [0, 1].
fn golden_min(mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-9 {
            break;
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Fit the smoothing gains and initial state by minimizing the sum of squared
/// one-step errors: a coarse grid over the gain cube, the best cells refined
/// by coordinate descent, with the initial state solved exactly per candidate.
/// The squared-error surface in the gains is nonconvex; this returns the best
/// local minimizer found.
pub fn hw_fit(
    ts: &TimeSeries,
    structure: &ModelStructure,
    options: &HwFitOptions,
) -> Result<(HwParams, f64)> {
    ts.require_complete()?;
    let needed = structure.period() + 2;
    if ts.observed_count() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: ts.observed_count(),
        });
    }

    if let Some((alpha, beta, gamma)) = options.fixed {
        let (sse, x0) = sse_for(ts, structure, alpha, beta, gamma);
        return Ok((
            HwParams {
                alpha,
                beta,
                gamma,
                x0,
            },
            sse,
        ));
    }

    let grid = [0.05, 0.275, 0.5, 0.725, 0.95];
    let mut cells: Vec<(f64, [f64; 3])> = Vec::with_capacity(125);
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                let (sse, _) = sse_for(ts, structure, a, b, c);
                cells.push((sse, [a, b, c]));
            }
        }
    }
    cells.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    let mut best: Option<(f64, [f64; 3])> = None;
    for (_, start) in cells.iter().take(3) {
        let mut gains = *start;
        let mut current = sse_for(ts, structure, gains[0], gains[1], gains[2]).0;
        for _round in 0..8 {
            let before = current;
            for coord in 0..3 {
                let (v, sse) = golden_min(|x| {
                    let mut trial = gains;
                    trial[coord] = x;
                    sse_for(ts, structure, trial[0], trial[1], trial[2]).0
                });
                if sse < current {
                    gains[coord] = v;
                    current = sse;
                }
            }
            if before - current <= 1e-14 * (1.0 + before) {
                break;
            }
        }
        if best.map_or(true, |(b, _)| current < b) {
            best = Some((current, gains));
        }
    }
    let (_, gains) = best.expect("grid is non-empty");
    let (sse, x0) = sse_for(ts, structure, gains[0], gains[1], gains[2]);
    Ok((
        HwParams {
            alpha: gains[0],
            beta: gains[1],
            gamma: gains[2],
            x0,
        },
        sse,
    ))
}

/// Forecast from the final filter state by path simulation: residuals are
/// resampled from the pool and injected through the gain vector.
///
/// The path engine emits after updating, so the filter state (which has
/// already absorbed `y_T`) is rolled back one transition to make horizon 1
/// the proper one-step-ahead prediction.
pub fn hw_forecast(
    final_state: &DVector<f64>,
    structure: &ModelStructure,
    params: &HwParams,
    residual_pool: &[f64],
    horizon: usize,
    n_paths: usize,
    level: f64,
    seed: u64,
) -> Result<ForecastResult> {
    params.validate(structure)?;
    if residual_pool.is_empty() {
        return Err(Error::EmptyPool("residual"));
    }
    let aligned = structure.apply_inverse(final_state)?;
    let g = structure.gain(params.alpha, params.beta, params.gamma);
    let pools = NoisePools {
        residuals: residual_pool.to_vec(),
        increments: residual_pool
            .iter()
            .map(|&e| (&g * e).as_slice().to_vec())
            .collect(),
    };
    forecast(
        &aligned,
        structure,
        &pools,
        horizon,
        n_paths,
        level,
        ResidualSource::Empirical,
        seed,
    )
}

/// Standard normal density.
fn phi(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 erf approximation.
fn normal_cdf(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.3275911 * x.abs() / std::f64::consts::SQRT_2);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-(x * x) / 2.0).exp();
    if x >= 0.0 {
        0.5 * (1.0 + erf)
    } else {
        0.5 * (1.0 - erf)
    }
}

/// `E[min(Z^2, k^2)]` for standard normal Z; the scale update divides by this
/// so that it is unbiased under clean Gaussian residuals.
fn clipped_square_mean(k: f64) -> f64 {
    (2.0 * normal_cdf(k) - 1.0) - 2.0 * k * phi(k) + 2.0 * k * k * (1.0 - normal_cdf(k))
}

/// Robust pre-filter: sequentially predict, clip the residual at
/// `huber_k * sigma_t`, and replace the observation by prediction + clipped
/// residual. The scale follows an exponential smoothing of the clipped
/// squared residual; the state is driven by the cleaned observation.
pub fn rhw_clean(
    ts: &TimeSeries,
    structure: &ModelStructure,
    params: &HwParams,
    rparams: &RobustFilterParams,
) -> Result<TimeSeries> {
    ts.require_complete()?;
    params.validate(structure)?;
    if !(rparams.sigma0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma0",
            value: rparams.sigma0,
            requirement: "> 0",
        });
    }
    if !(rparams.lambda_sigma > 0.0 && rparams.lambda_sigma < 1.0) {
        return Err(Error::InvalidParameter {
            name: "lambda_sigma",
            value: rparams.lambda_sigma,
            requirement: "in (0, 1)",
        });
    }
    if !(rparams.huber_k > 0.0) {
        return Err(Error::InvalidParameter {
            name: "huber_k",
            value: rparams.huber_k,
            requirement: "> 0",
        });
    }

    let unbias = clipped_square_mean(rparams.huber_k);
    let g = structure.gain(params.alpha, params.beta, params.gamma);
    let mut z = params.x0.clone();
    let mut sigma2 = rparams.sigma0 * rparams.sigma0;
    let mut cleaned = Vec::with_capacity(ts.len());
    for t in 0..ts.len() {
        let y = ts.value(t).expect("complete series");
        let pred = structure.measure(&z);
        let r = y - pred;
        let bound = rparams.huber_k * sigma2.sqrt();
        let clipped = r.clamp(-bound, bound);
        cleaned.push(pred + clipped);
        sigma2 = (1.0 - rparams.lambda_sigma) * sigma2
            + rparams.lambda_sigma * r.powi(2).min(bound * bound) / unbias;
        z = structure.a() * &z + &g * clipped;
    }
    TimeSeries::complete(cleaned)
}
