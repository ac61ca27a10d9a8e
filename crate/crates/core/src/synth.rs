//! Seeded synthetic series with level/trend shifts, heteroscedastic noise,
//! and heavy-tailed outliers, plus the ground truth for scoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytics::Decomposition;
use crate::series::TimeSeries;
use crate::{Error, Result};

/// Observation-noise scale over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseSchedule {
    Constant(f64),
    /// `(start_index, sigma)` segments; the first segment is implicit at 0
    /// with the given base value.
    Piecewise { base: f64, changes: Vec<(usize, f64)> },
    Sinusoidal { base: f64, amplitude: f64, period: f64 },
}

impl NoiseSchedule {
    fn sigma_at(&self, t: usize) -> f64 {
        match self {
            NoiseSchedule::Constant(s) => *s,
            NoiseSchedule::Piecewise { base, changes } => {
                let mut sigma = *base;
                for &(at, s) in changes {
                    if t >= at {
                        sigma = s;
                    }
                }
                sigma
            }
            NoiseSchedule::Sinusoidal {
                base,
                amplitude,
                period,
            } => base + amplitude * (2.0 * std::f64::consts::PI * t as f64 / period).sin(),
        }
    }

    fn min_sigma(&self, len: usize) -> f64 {
        (0..len).map(|t| self.sigma_at(t)).fold(f64::INFINITY, f64::min)
    }
}

/// Generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Number of points.
    pub len: usize,
    pub period: usize,
    pub base_level: f64,
    /// Slope per step at t = 0.
    pub base_trend: f64,
    /// `(time, delta)` jumps added to the level.
    pub level_shifts: Vec<(usize, f64)>,
    /// `(time, delta)` changes added to the slope.
    pub trend_shifts: Vec<(usize, f64)>,
    pub seasonal_amplitude: f64,
    pub noise: NoiseSchedule,
    /// Outlier probability per point.
    pub outlier_fraction: f64,
    /// Magnitude scale of outliers, in robust noise-scale units.
    pub outlier_scale: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// The synthetic scenario used throughout: trend and level shifts,
    /// sinusoidal heteroscedastic noise, 1.5% heavy-tailed outliers.
    pub fn fig1() -> Self {
        Self {
            len: 1000,
            period: 12,
            base_level: 25.0,
            base_trend: 0.02,
            level_shifts: vec![(300, 6.0)],
            trend_shifts: vec![(600, -0.05)],
            seasonal_amplitude: 2.5,
            noise: NoiseSchedule::Sinusoidal {
                base: 1.0,
                amplitude: 0.8,
                period: 250.0,
            },
            outlier_fraction: 0.015,
            outlier_scale: 10.0,
            seed: 20240117,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::InvalidPeriod(self.period));
        }
        if self.len < self.period + 2 {
            return Err(Error::InsufficientData {
                needed: self.period + 2,
                got: self.len,
            });
        }
        if !(0.0..=0.2).contains(&self.outlier_fraction) {
            return Err(Error::InvalidParameter {
                name: "outlier_fraction",
                value: self.outlier_fraction,
                requirement: "in [0, 0.2]",
            });
        }
        if self.outlier_scale < 0.0 {
            return Err(Error::InvalidParameter {
                name: "outlier_scale",
                value: self.outlier_scale,
                requirement: ">= 0",
            });
        }
        if self.seasonal_amplitude < 0.0 {
            return Err(Error::InvalidParameter {
                name: "seasonal_amplitude",
                value: self.seasonal_amplitude,
                requirement: ">= 0",
            });
        }
        if self.noise.min_sigma(self.len) < 0.0 {
            return Err(Error::InvalidParameter {
                name: "noise",
                value: self.noise.min_sigma(self.len),
                requirement: "sigma_t >= 0",
            });
        }
        Ok(())
    }
}

/// Generated series plus everything needed to score a fit against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub series: TimeSeries,
    /// Noise-free components: `y_t = level[t] + seasonal[t] + noise + outlier`.
    /// (`trend[t]` is the slope at `t`, already folded into the level path.)
    pub truth: Decomposition,
    pub outlier_indices: Vec<usize>,
    pub noise_sigma: Vec<f64>,
}

/// Generate a seeded series from the config.
pub fn synth_generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let pattern: Vec<f64> = (0..config.period)
        .map(|k| {
            config.seasonal_amplitude
                * (2.0 * std::f64::consts::PI * k as f64 / config.period as f64).sin()
        })
        .collect();

    let mut level = config.base_level;
    let mut slope = config.base_trend;
    let mut truth = Decomposition {
        level: Vec::with_capacity(config.len),
        trend: Vec::with_capacity(config.len),
        seasonal: Vec::with_capacity(config.len),
    };
    let mut values = Vec::with_capacity(config.len);
    let mut outliers = Vec::new();
    let mut sigmas = Vec::with_capacity(config.len);
    // Outlier magnitudes reference the average noise scale: a separate
    // contamination process, not modulated by the local noise level.
    let sigma_ref = ((0..config.len)
        .map(|t| config.noise.sigma_at(t))
        .sum::<f64>()
        / config.len.max(1) as f64)
        .max(1e-12);

    for t in 0..config.len {
        for &(at, delta) in &config.level_shifts {
            if at == t {
                level += delta;
            }
        }
        for &(at, delta) in &config.trend_shifts {
            if at == t {
                slope += delta;
            }
        }
        let seasonal = pattern[t % config.period];
        let sigma = config.noise.sigma_at(t);
        sigmas.push(sigma);

        let eta: f64 = rng.sample(StandardNormal);
        let mut y = level + seasonal + sigma * eta;
        if config.outlier_fraction > 0.0 && rng.random::<f64>() < config.outlier_fraction {
            // Heavy-tailed magnitude: a floor plus an exponential tail, in
            // units of the average noise scale, with random sign.
            let tail: f64 = -(rng.random::<f64>()).ln();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let magnitude = config.outlier_scale * (0.75 + 0.5 * tail) * sigma_ref;
            y += sign * magnitude;
            outliers.push(t);
        }

        truth.level.push(level);
        truth.trend.push(slope);
        truth.seasonal.push(seasonal);
        values.push(y);

        level += slope;
    }

    Ok(SynthOutput {
        series: TimeSeries::complete(values)?,
        truth,
        outlier_indices: outliers,
        noise_sigma: sigmas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean_config() -> SynthConfig {
        SynthConfig {
            len: 100,
            period: 4,
            base_level: 10.0,
            base_trend: 0.1,
            level_shifts: vec![(50, 3.0)],
            trend_shifts: vec![(70, -0.2)],
            seasonal_amplitude: 2.0,
            noise: NoiseSchedule::Constant(0.0),
            outlier_fraction: 0.0,
            outlier_scale: 0.0,
            seed: 7,
        }
    }

    #[test]
    fn zero_noise_means_exact_decomposition() {
        let out = synth_generate(&clean_config()).unwrap();
        for t in 0..100 {
            let y = out.series.value(t).unwrap();
            assert_eq!(y, out.truth.level[t] + out.truth.seasonal[t]);
        }
        assert!(out.outlier_indices.is_empty());
    }

    #[test]
    fn same_seed_is_identical() {
        let mut config = SynthConfig::fig1();
        config.len = 300;
        let a = synth_generate(&config).unwrap();
        let b = synth_generate(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn outlier_count_near_binomial_mean() {
        let mut config = SynthConfig::fig1();
        config.len = 2000;
        config.seed = 99;
        let out = synth_generate(&config).unwrap();
        let n = out.outlier_indices.len() as f64;
        let mean = 2000.0 * 0.015;
        let sd = (2000.0_f64 * 0.015 * 0.985).sqrt();
        assert!(
            (n - mean).abs() <= 3.0 * sd,
            "outlier count {n} outside 3 standard deviations of {mean}"
        );
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let mut c = clean_config();
        c.outlier_fraction = 0.3;
        assert!(synth_generate(&c).is_err());
        let mut c = clean_config();
        c.len = 4;
        assert!(synth_generate(&c).is_err());
        let mut c = clean_config();
        c.noise = NoiseSchedule::Constant(-1.0);
        assert!(synth_generate(&c).is_err());
    }

    #[test]
    fn trend_shift_changes_slope() {
        let out = synth_generate(&clean_config()).unwrap();
        // Slope before 70 is 0.1; after, -0.1.
        assert!((out.truth.level[60] - out.truth.level[59] - 0.1).abs() < 1e-12);
        assert!((out.truth.level[90] - out.truth.level[89] + 0.1).abs() < 1e-12);
    }
}
