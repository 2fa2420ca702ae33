//! Performance metrics over rollout traces.

mod peaks;
mod segment;
mod sparc;
mod speed;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use peaks::{count_velocity_peaks, peak_prominences};
pub use segment::{split_at_contact, ContactSplit};
pub use sparc::sparc;
pub use speed::{speed_profile, SpeedProfile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("signal `{0}` is not in the trace")]
    MissingSignal(String),
    #[error("expected 2 or 3 position signals, got {0}")]
    PositionArity(usize),
    #[error("trace duration {duration}s too short for {rate} Hz (need more than {min}s)")]
    TooShort { duration: f64, rate: f64, min: f64 },
    #[error("speed profile needs at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("speed profile samples are not uniformly spaced")]
    NonUniform,
    #[error("speed values must be finite and non-negative")]
    InvalidSpeed,
    #[error("sample rate must be positive and finite")]
    InvalidRate,
    #[error("undefined smoothness: speed profile is identically zero")]
    ZeroProfile,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Spectral arc length parameters; defaults match the published reference code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SparcConfig {
    /// Extra doublings of the FFT length beyond the next power of two.
    pub pad_level: u32,
    pub max_cutoff_hz: f64,
    pub amplitude_threshold: f64,
}

impl Default for SparcConfig {
    fn default() -> Self {
        Self { pad_level: 4, max_cutoff_hz: 10.0, amplitude_threshold: 0.05 }
    }
}

impl SparcConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.max_cutoff_hz.is_finite() && self.max_cutoff_hz > 0.0) {
            return Err(MetricError::InvalidConfig("max_cutoff_hz must be > 0".into()));
        }
        if !(self.amplitude_threshold > 0.0 && self.amplitude_threshold < 1.0) {
            return Err(MetricError::InvalidConfig("amplitude_threshold must lie in (0, 1)".into()));
        }
        if self.pad_level > 16 {
            return Err(MetricError::InvalidConfig("pad_level must be <= 16".into()));
        }
        Ok(())
    }
}

/// Velocity peak detection; minimum prominence as a fraction of peak speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakConfig {
    pub prominence_fraction: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self { prominence_fraction: 0.05 }
    }
}

impl PeakConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.prominence_fraction > 0.0 && self.prominence_fraction < 1.0) {
            return Err(MetricError::InvalidConfig("prominence_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}
