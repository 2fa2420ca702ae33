use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::metrics::{count_velocity_peaks, sparc, speed_profile};
use crate::model::{TaskSpec, Trace};
use crate::stl::{parse_formula, robustness};

/// Per-rollout numbers shown in the performance section. A `None` (or a
/// missing robustness entry) renders as "not computed".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutMetrics {
    #[serde(default)]
    pub sparc: Option<f64>,
    #[serde(default)]
    pub peaks: Option<usize>,
    /// Keyed by STL spec name.
    #[serde(default)]
    pub robustness: BTreeMap<String, f64>,
    /// Why a metric could not be computed, keyed by metric or spec name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<String, String>,
}

/// Computes every metric the task asks for on one trace. Failures are
/// recorded in `errors` rather than aborting the rest.
pub fn compute_rollout_metrics(task: &TaskSpec, trace: &Trace) -> RolloutMetrics {
    let mut out = RolloutMetrics::default();
    let cfg = &task.metric_config;
    if !cfg.position_signals.is_empty() {
        let names: Vec<&str> = cfg.position_signals.iter().map(String::as_str).collect();
        match speed_profile(trace, &names, cfg.sample_rate_hz) {
            Ok(profile) => {
                match sparc(&profile, &cfg.sparc) {
                    Ok(v) => out.sparc = Some(v),
                    Err(e) => {
                        out.errors.insert("sparc".into(), e.to_string());
                    }
                }
                match count_velocity_peaks(&profile, &cfg.peaks) {
                    Ok(v) => out.peaks = Some(v),
                    Err(e) => {
                        out.errors.insert("peaks".into(), e.to_string());
                    }
                }
            }
            Err(e) => {
                out.errors.insert("sparc".into(), e.to_string());
                out.errors.insert("peaks".into(), e.to_string());
            }
        }
    }
    for spec in &task.stl_specs {
        let value = parse_formula(&spec.formula)
            .map_err(|e| e.to_string())
            .and_then(|f| robustness(&f, trace).map_err(|e| e.to_string()));
        match value {
            Ok(v) => {
                out.robustness.insert(spec.name.clone(), v);
            }
            Err(e) => {
                out.errors.insert(spec.name.clone(), e);
            }
        }
    }
    out
}
