use statrs::function::beta::beta_reg;

use super::StatsError;

/// Inverse of the regularized incomplete beta by bisection (width < 1e-12).
pub(crate) fn beta_quantile(q: f64, a: f64, b: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact (Clopper-Pearson) binomial confidence interval at `level`.
pub fn clopper_pearson(successes: u64, failures: u64, level: f64) -> Result<(f64, f64), StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidLevel(level));
    }
    let n = successes + failures;
    if n == 0 {
        return Err(StatsError::ZeroTrials);
    }
    let tail = (1.0 - level) / 2.0;
    let (s, f) = (successes as f64, failures as f64);
    let lo = if successes == 0 { 0.0 } else { beta_quantile(tail, s, f + 1.0) };
    let hi = if failures == 0 { 1.0 } else { beta_quantile(1.0 - tail, s + 1.0, f) };
    Ok((lo, hi))
}
