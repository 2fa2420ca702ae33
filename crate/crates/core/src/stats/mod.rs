//! Beta-Bernoulli analysis of policy success rates.
//!
//! Success of a policy is Bernoulli with unknown `p`; with a `Beta(α, β)`
//! prior the posterior after `s` successes and `f` failures is
//! `Beta(α + s, β + f)`.
//!
//! Monte Carlo draws use ChaCha8 (`rand_chacha`) seeded through
//! `SeedableRng::seed_from_u64`, so a seed reproduces the same draws on every
//! platform.

mod compare;
mod interval;
mod quadrature;
mod shift;
mod superiority;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compare::{compare, ComparisonResult, Counts, MIN_SAMPLES};
pub use interval::clopper_pearson;
pub use shift::{shift_report, IcComparison, ShiftReport};
pub use superiority::prob_superior;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("beta parameters must be finite and positive, got ({alpha}, {beta})")]
    InvalidParameters { alpha: f64, beta: f64 },
    #[error("credible level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("n_samples = {0} is below the minimum of {MIN_SAMPLES}")]
    TooFewSamples(usize),
    #[error("interval needs at least one trial")]
    ZeroTrials,
    #[error("no initial conditions shared between the two evaluations")]
    NoSharedIcs,
    #[error("initial conditions {0:?} appear after but not before")]
    UnknownIcs(Vec<u32>),
}

/// `Beta(alpha, beta)` distribution over a success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPosterior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, StatsError> {
        if alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0 {
            Ok(Self { alpha, beta })
        } else {
            Err(StatsError::InvalidParameters { alpha, beta })
        }
    }

    /// The uniform prior `Beta(1, 1)`.
    pub fn uniform() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    /// Equal-tailed credible interval at `level`.
    pub fn credible_interval(&self, level: f64) -> Result<(f64, f64), StatsError> {
        if !(level > 0.0 && level < 1.0) {
            return Err(StatsError::InvalidLevel(level));
        }
        let tail = (1.0 - level) / 2.0;
        Ok((
            interval::beta_quantile(tail, self.alpha, self.beta),
            interval::beta_quantile(1.0 - tail, self.alpha, self.beta),
        ))
    }
}

impl Default for BetaPosterior {
    fn default() -> Self {
        Self::uniform()
    }
}

/// Conjugate update of `prior` with observed counts.
pub fn posterior(prior: BetaPosterior, successes: u64, failures: u64) -> Result<BetaPosterior, StatsError> {
    BetaPosterior::new(prior.alpha, prior.beta)?;
    BetaPosterior::new(prior.alpha + successes as f64, prior.beta + failures as f64)
}
