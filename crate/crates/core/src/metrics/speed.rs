use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::model::Trace;

/// End-effector speed on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    times: Vec<f64>,
    speed: Vec<f64>,
    sample_rate: f64,
}

impl SpeedProfile {
    pub fn new(times: Vec<f64>, speed: Vec<f64>, sample_rate: f64) -> Result<Self, MetricError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(MetricError::InvalidRate);
        }
        if speed.len() < 4 {
            return Err(MetricError::TooFewSamples(speed.len()));
        }
        if times.len() != speed.len() {
            return Err(MetricError::NonUniform);
        }
        if speed.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MetricError::InvalidSpeed);
        }
        let dt = 1.0 / sample_rate;
        let uniform = times.windows(2).all(|w| {
            let step = w[1] - w[0];
            (step - dt).abs() <= 1e-9 * dt.max(w[1].abs())
        });
        if !uniform {
            return Err(MetricError::NonUniform);
        }
        Ok(Self { times, speed, sample_rate })
    }

    /// Profile sampled at `sample_rate` starting from `t = 0`.
    pub fn from_samples(speed: Vec<f64>, sample_rate: f64) -> Result<Self, MetricError> {
        let times = (0..speed.len()).map(|k| k as f64 / sample_rate).collect();
        Self::new(times, speed, sample_rate)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed.is_empty()
    }
}

/// Linear interpolation of `(xs, ys)` at `x` (clamped to the ends).
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let j = xs.partition_point(|&s| s <= x);
    if j == 0 {
        return ys[0];
    }
    if j == xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[j - 1], xs[j]);
    let w = (x - x0) / (x1 - x0);
    ys[j - 1] + w * (ys[j] - ys[j - 1])
}

/// Resamples the named position signals to `target_rate` and differentiates.
///
/// Velocity uses central differences in the interior and one-sided
/// differences at the two endpoints; speed is its Euclidean norm.
pub fn speed_profile(trace: &Trace, position_signals: &[&str], target_rate: f64) -> Result<SpeedProfile, MetricError> {
    if !(2..=3).contains(&position_signals.len()) {
        return Err(MetricError::PositionArity(position_signals.len()));
    }
    if !(target_rate.is_finite() && target_rate > 0.0) {
        return Err(MetricError::InvalidRate);
    }
    let axes: Vec<&[f64]> = position_signals
        .iter()
        .map(|s| trace.signal(s).ok_or_else(|| MetricError::MissingSignal(s.to_string())))
        .collect::<Result<_, _>>()?;
    let duration = trace.end() - trace.start();
    let min = 4.0 / target_rate;
    if duration <= min {
        return Err(MetricError::TooShort { duration, rate: target_rate, min });
    }
    let n = (duration * target_rate + 1e-9).floor() as usize + 1;
    let dt = 1.0 / target_rate;
    let grid: Vec<f64> = (0..n).map(|k| trace.start() + k as f64 * dt).collect();
    let resampled: Vec<Vec<f64>> =
        axes.iter().map(|ys| grid.iter().map(|&t| interp(trace.times(), ys, t)).collect()).collect();
    let speed = (0..n)
        .map(|k| {
            let (a, b, span) = match k {
                0 => (0, 1, dt),
                k if k == n - 1 => (n - 2, n - 1, dt),
                k => (k - 1, k + 1, 2.0 * dt),
            };
            resampled.iter().map(|p| ((p[b] - p[a]) / span).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    SpeedProfile::new(grid, speed, target_rate)
}
