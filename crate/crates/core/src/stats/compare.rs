use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{posterior, prob_superior, BetaPosterior, StatsError};

/// Fewer draws than this give intervals too noisy to report.
pub const MIN_SAMPLES: usize = 1000;

/// Success/failure counts for one condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub successes: u64,
    pub failures: u64,
}

impl Counts {
    pub fn new(successes: u64, failures: u64) -> Self {
        Self { successes, failures }
    }

    pub fn trials(&self) -> u64 {
        self.successes + self.failures
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, rhs: Counts) -> Counts {
        Counts::new(self.successes + rhs.successes, self.failures + rhs.failures)
    }
}

/// Posterior comparison of a second condition against a first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub first: BetaPosterior,
    pub second: BetaPosterior,
    /// Exact `P(p_second > p_first)`.
    pub prob_second_better: f64,
    pub level: f64,
    /// Equal-tailed credible interval of `p_second - p_first` (Monte Carlo).
    pub diff_interval: (f64, f64),
    pub excludes_zero: bool,
    pub n_samples: usize,
    pub seed: u64,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

pub fn compare(
    first: Counts,
    second: Counts,
    prior: BetaPosterior,
    level: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ComparisonResult, StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidLevel(level));
    }
    if n_samples < MIN_SAMPLES {
        return Err(StatsError::TooFewSamples(n_samples));
    }
    let a = posterior(prior, first.successes, first.failures)?;
    let b = posterior(prior, second.successes, second.failures)?;
    let da = Beta::new(a.alpha, a.beta).expect("validated parameters");
    let db = Beta::new(b.alpha, b.beta).expect("validated parameters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diffs: Vec<f64> = (0..n_samples)
        .map(|_| {
            let pa = da.sample(&mut rng);
            let pb = db.sample(&mut rng);
            pb - pa
        })
        .collect();
    diffs.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = quantile(&diffs, tail);
    let hi = quantile(&diffs, 1.0 - tail);
    Ok(ComparisonResult {
        first: a,
        second: b,
        prob_second_better: prob_superior(&a, &b),
        level,
        diff_interval: (lo, hi),
        excludes_zero: !(lo <= 0.0 && 0.0 <= hi),
        n_samples,
        seed,
    })
}
