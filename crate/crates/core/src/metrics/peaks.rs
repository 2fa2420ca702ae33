use super::{MetricError, PeakConfig, SpeedProfile};

/// Local maxima of `x` as `(index, prominence)`.
///
/// A maximum is a sample (or flat run of samples, reported at its middle)
/// strictly higher than the neighbours on both sides; samples at the ends of
/// the series never qualify. Prominence is the height above the higher of
/// the two lowest points found when walking left and right until terrain
/// strictly higher than the peak, or the series end, is reached.
pub fn peak_prominences(x: &[f64]) -> Vec<(usize, f64)> {
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if ahead < n && x[ahead] < x[i] {
                let left = i;
                let right = ahead - 1;
                peaks.push((left + right) / 2);
                i = ahead;
                continue;
            }
            i = ahead;
            continue;
        }
        i += 1;
    }
    peaks
        .into_iter()
        .map(|p| {
            let h = x[p];
            let mut left_min = h;
            for &v in x[..p].iter().rev() {
                if v > h {
                    break;
                }
                left_min = left_min.min(v);
            }
            let mut right_min = h;
            for &v in &x[p + 1..] {
                if v > h {
                    break;
                }
                right_min = right_min.min(v);
            }
            (p, h - left_min.max(right_min))
        })
        .collect()
}

/// Number of velocity peaks whose prominence is at least
/// `prominence_fraction * max(speed)`.
pub fn count_velocity_peaks(profile: &SpeedProfile, config: &PeakConfig) -> Result<usize, MetricError> {
    config.validate()?;
    let speed = profile.speed();
    let max = speed.iter().copied().fold(0.0, f64::max);
    let threshold = config.prominence_fraction * max;
    Ok(peak_prominences(speed).into_iter().filter(|(_, prom)| *prom >= threshold && *prom > 0.0).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(v: Vec<f64>) -> SpeedProfile {
        SpeedProfile::from_samples(v, 100.0).unwrap()
    }

    #[test]
    fn constant_has_no_peaks() {
        let p = profile(vec![0.7; 50]);
        assert_eq!(count_velocity_peaks(&p, &PeakConfig::default()).unwrap(), 0);
    }

    #[test]
    fn triangle_has_one() {
        let v: Vec<f64> = (0..21).map(|k| 10.0 - (k as f64 - 10.0).abs()).collect();
        assert_eq!(count_velocity_peaks(&profile(v), &PeakConfig::default()).unwrap(), 1);
    }

    #[test]
    fn flat_topped_peak_counts_once() {
        let v = vec![0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0];
        assert_eq!(peak_prominences(&v), vec![(3, 2.0)]);
        // Monotone ramp ending on a plateau is not a peak.
        assert!(peak_prominences(&[0.0, 1.0, 2.0, 2.0]).is_empty());
    }

    #[test]
    fn small_ripple_filtered() {
        let mut v: Vec<f64> = (0..41).map(|k| 20.0 - (k as f64 - 20.0).abs()).collect();
        v[10] += 1.5; // ripple on the rising flank, prominence 0.5 < 5% of 20
        let p = profile(v);
        assert_eq!(count_velocity_peaks(&p, &PeakConfig::default()).unwrap(), 1);
        let loose = PeakConfig { prominence_fraction: 0.01 };
        assert_eq!(count_velocity_peaks(&p, &loose).unwrap(), 2);
    }
}
