//! Synthetic truth and per-level base forecasts.
//!
//! The bottom-level truth is a stationary AR(1) process. Each level of the
//! hierarchy gets its own AR(1)-with-intercept model fitted by least squares
//! on that level's aggregated training series; sample paths are produced by
//! recursive simulation with bootstrapped residuals.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sampling::{row_rng, uniform_below, LevelSample};

const BURN_IN: usize = 500;
const MIN_FIT_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    /// Autoregressive coefficient, `|phi| < 1`.
    pub phi: f64,
    /// Innovation standard deviation.
    pub sigma: f64,
    /// Intercept; the stationary mean is `mu / (1 - phi)`.
    pub mu: f64,
    pub cycle_len: usize,
    pub train_cycles: usize,
    pub val_cycles: usize,
    pub test_cycles: usize,
    pub seed: u64,
    pub clip_at_zero: bool,
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<()> {
        if self.phi.is_nan() || self.phi.abs() >= 1.0 {
            return Err(Error::InvalidScenario(format!(
                "|phi| must be < 1, got {}",
                self.phi
            )));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidScenario(format!(
                "sigma must be finite and nonnegative, got {}",
                self.sigma
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidScenario("mu must be finite".into()));
        }
        if self.cycle_len == 0 {
            return Err(Error::InvalidScenario(
                "cycle length must be positive".into(),
            ));
        }
        if self.train_cycles == 0 || self.val_cycles == 0 || self.test_cycles == 0 {
            return Err(Error::InvalidScenario(
                "train, validation and test cycle counts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn total_cycles(&self) -> usize {
        self.train_cycles + self.val_cycles + self.test_cycles
    }

    pub fn stationary_mean(&self) -> f64 {
        self.mu / (1.0 - self.phi)
    }
}

/// Bottom-level AR(1) path covering every cycle of the scenario.
pub fn simulate_truth(scn: &SyntheticScenario) -> Result<Vec<f64>> {
    scn.validate()?;
    let len = scn.cycle_len * scn.total_cycles();
    let mut rng = row_rng(scn.seed, 0x0074_7275_7468);
    let mut x = scn.stationary_mean();
    let mut out = Vec::with_capacity(len);
    for t in 0..BURN_IN + len {
        let eps: f64 = StandardNormal.sample(&mut rng);
        x = scn.mu + scn.phi * x + scn.sigma * eps;
        if t >= BURN_IN {
            out.push(if scn.clip_at_zero { x.max(0.0) } else { x });
        }
    }
    Ok(out)
}

/// AR(1) with intercept, fitted on one level's native-unit series.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelForecaster {
    pub level: usize,
    /// Bottom periods per step, used to convert paths to common units.
    pub freq: usize,
    pub phi: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

impl LevelForecaster {
    pub fn one_step_mean(&self, last: f64) -> f64 {
        self.intercept + self.phi * last
    }
}

/// Least-squares fit of `y_t = c + phi * y_{t-1} + e_t`. A constant lagged
/// series leaves `phi` unidentified; the fit then falls back to `phi = 0`.
pub fn fit_level(series: &[f64], level: usize, freq: usize) -> Result<LevelForecaster> {
    if series.len() < MIN_FIT_LEN {
        return Err(Error::TooShort {
            required: MIN_FIT_LEN,
            actual: series.len(),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSample);
    }
    let lagged = &series[..series.len() - 1];
    let target = &series[1..];
    let n = lagged.len() as f64;
    let mean_x = lagged.iter().sum::<f64>() / n;
    let mean_y = target.iter().sum::<f64>() / n;
    let sxx: f64 = lagged.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = lagged
        .iter()
        .zip(target)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();

    let scale = lagged.iter().map(|x| x.abs()).fold(1.0, f64::max);
    let (phi, intercept) = if sxx <= 1e-20 * n * scale * scale {
        (0.0, mean_y)
    } else {
        let phi = sxy / sxx;
        (phi, mean_y - phi * mean_x)
    };
    let residuals = lagged
        .iter()
        .zip(target)
        .map(|(x, y)| y - intercept - phi * x)
        .collect();
    Ok(LevelForecaster {
        level,
        freq,
        phi,
        intercept,
        residuals,
    })
}

/// `n` recursive paths of `horizon` steps from the last native observation,
/// returned in common units. Paths are driven by ChaCha8 on (`seed`,
/// `stream`), so distinct streams give independent draws.
pub fn sample_paths(
    fc: &LevelForecaster,
    last: f64,
    horizon: usize,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<LevelSample> {
    if horizon == 0 {
        return Err(Error::DimensionMismatch(
            "horizon must be at least 1".into(),
        ));
    }
    if n < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            actual: n,
        });
    }
    if fc.residuals.is_empty() {
        return Err(Error::TooShort {
            required: 1,
            actual: 0,
        });
    }
    let mut rng = row_rng(seed, stream);
    let pool = fc.residuals.len() as u64;
    let to_common = 1.0 / fc.freq as f64;
    let mut matrix = DMatrix::zeros(horizon, n);
    for col in 0..n {
        let mut y = last;
        for step in 0..horizon {
            let e = fc.residuals[uniform_below(&mut rng, pool) as usize];
            y = fc.intercept + fc.phi * y + e;
            matrix[(step, col)] = y * to_common;
        }
    }
    LevelSample::new(fc.level, matrix)
}
