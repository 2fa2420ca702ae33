//! Reference speed profiles for SPARC.

use std::f64::consts::PI;

use crate::metrics::SpeedProfile;

fn gauss(t: f64, c: f64, s: f64) -> f64 {
    (-(t - c).powi(2) / (2.0 * s * s)).exp()
}

fn profile(n: usize, fs: f64, f: impl Fn(f64) -> f64) -> SpeedProfile {
    SpeedProfile::from_samples((0..n).map(|k| f(k as f64 / fs)).collect(), fs).expect("valid profile")
}

/// Speed profiles with SPARC values from the numpy reference implementation
/// (`tests/oracles/reference_values.py`).
pub fn sparc_cases() -> Vec<(&'static str, SpeedProfile, f64)> {
    vec![
        ("single_bump", profile(200, 100.0, |t| gauss(t, 1.0, 0.25)), -1.4123134198144667),
        ("two_bumps", profile(240, 100.0, |t| gauss(t, 0.7, 0.15) + gauss(t, 1.5, 0.15)), -2.5269546191165846),
        (
            "three_bumps",
            profile(300, 100.0, |t| gauss(t, 0.6, 0.15) + 0.8 * gauss(t, 1.4, 0.15) + gauss(t, 2.3, 0.2)),
            -2.9136322575089655,
        ),
        ("min_jerk_100hz", profile(101, 100.0, |t| 30.0 * t * t * (1.0 - t).powi(2)), -1.4058293244214652),
        (
            "min_jerk_50hz",
            profile(76, 50.0, |t| {
                let tau = t / 1.5;
                30.0 * tau * tau * (1.0 - tau).powi(2) / 1.5
            }),
            -1.4025412155852754,
        ),
        (
            "bump_with_tremor",
            profile(200, 100.0, |t| gauss(t, 1.0, 0.25) + 0.05 * (1.0 + (2.0 * PI * 6.0 * t).sin())),
            -1.8212258929004443,
        ),
        (
            "four_bumps",
            profile(400, 100.0, |t| [0.5, 1.4, 2.3, 3.2].iter().map(|c| gauss(t, *c, 0.12)).sum()),
            -4.445269491709717,
        ),
        ("skewed_bump", profile(150, 100.0, |t| t * (-t / 0.3).exp()), -1.5396712751697539),
        ("raised_cosine_200hz", profile(200, 200.0, |t| 1.0 - (2.0 * PI * t).cos()), -1.4010504105071995),
        ("short_bump_30hz", profile(37, 30.0, |t| gauss(t, 0.6, 0.2)), -1.4148840808536631),
    ]
}
