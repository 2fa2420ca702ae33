use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{MetricError, SparcConfig, SpeedProfile};

/// Spectral arc length of a speed profile (dimensionless, `<= 0`).
///
/// The speed is zero-padded to `2^(ceil(log2 N) + pad_level)` points, its
/// magnitude spectrum normalized by the zero-frequency magnitude, and the
/// spectrum is cut at the highest frequency up to `max_cutoff_hz` whose
/// normalized magnitude is still at least `amplitude_threshold`. The result is
/// the negated arc length of that curve with frequency scaled by the cutoff.
/// More negative means less smooth.
pub fn sparc(profile: &SpeedProfile, config: &SparcConfig) -> Result<f64, MetricError> {
    config.validate()?;
    let speed = profile.speed();
    if speed.len() < 4 {
        return Err(MetricError::TooFewSamples(speed.len()));
    }
    if speed.iter().all(|v| *v == 0.0) {
        return Err(MetricError::ZeroProfile);
    }
    let nfft = speed.len().next_power_of_two() << config.pad_level;
    let mut buf: Vec<Complex<f64>> = speed
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(nfft)
        .collect();
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);

    let df = profile.sample_rate() / nfft as f64;
    let dc = buf[0].norm();
    let in_band = (0..nfft).take_while(|&k| k as f64 * df <= config.max_cutoff_hz);
    let magnitude = |k: usize| buf[k].norm() / dc;
    let cutoff = in_band.filter(|&k| magnitude(k) >= config.amplitude_threshold).last().unwrap_or(0);
    if cutoff == 0 {
        return Ok(0.0);
    }
    let span = cutoff as f64 * df;
    let arc: f64 = (1..=cutoff)
        .map(|k| {
            let dx = df / span;
            let dy = magnitude(k) - magnitude(k - 1);
            (dx * dx + dy * dy).sqrt()
        })
        .sum();
    Ok(-arc)
}
