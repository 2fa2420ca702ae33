use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{PeakConfig, SparcConfig};
use crate::stl;

/// One yes/no rubric question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricQuestion {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub is_overall_success: bool,
}

impl RubricQuestion {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into(), is_overall_success: false }
    }

    pub fn overall(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { is_overall_success: true, ..Self::new(id, text) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub id: u32,
    pub description: String,
    /// Opaque path to an overlay image; never decoded here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
    #[serde(default = "default_true")]
    pub in_distribution: bool,
}

fn default_true() -> bool {
    true
}

/// A named STL specification evaluated on every attached trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StlSpec {
    pub name: String,
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    #[serde(default)]
    pub sparc: SparcConfig,
    #[serde(default)]
    pub peaks: PeakConfig,
    /// End-effector position signals used to build speed profiles.
    #[serde(default)]
    pub position_signals: Vec<String>,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
}

fn default_rate() -> f64 {
    100.0
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            sparc: SparcConfig::default(),
            peaks: PeakConfig::default(),
            position_signals: Vec::new(),
            sample_rate_hz: default_rate(),
        }
    }
}

/// Task definition: what success means, how it is scored, where rollouts start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub success_criteria: String,
    pub rubric: Vec<RubricQuestion>,
    pub initial_conditions: Vec<InitialCondition>,
    #[serde(default)]
    pub stl_specs: Vec<StlSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_signal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_threshold: Option<f64>,
    #[serde(default)]
    pub metric_config: MetricConfig,
    /// User-supplied failure taxonomy; notes prefixed `<category>:` are binned.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failure_categories: Vec<String>,
}

impl TaskSpec {
    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn overall_question(&self) -> Option<&RubricQuestion> {
        self.rubric.iter().find(|q| q.is_overall_success)
    }

    pub fn question_ids(&self) -> impl Iterator<Item = &str> {
        self.rubric.iter().map(|q| q.id.as_str())
    }

    pub fn initial_condition(&self, id: u32) -> Option<&InitialCondition> {
        self.initial_conditions.iter().find(|ic| ic.id == id)
    }
}

/// A single broken invariant of a [`TaskSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self { field: field.to_string(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Returns every invariant violation; an empty list means the task is valid.
pub fn validate_task_spec(spec: &TaskSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.name.trim().is_empty() {
        out.push(Violation::new("name", "task name missing"));
    }
    if spec.success_criteria.trim().is_empty() {
        out.push(Violation::new("success_criteria", "success criteria missing"));
    }

    if spec.rubric.is_empty() {
        out.push(Violation::new("rubric", "rubric has no questions"));
    } else {
        let overall: Vec<&str> = spec.rubric.iter().filter(|q| q.is_overall_success).map(|q| q.id.as_str()).collect();
        match overall.len() {
            1 => {}
            0 => out.push(Violation::new("rubric", "no question is marked as the overall-success question")),
            _ => out
                .push(Violation::new("rubric", format!("multiple overall-success questions: {}", overall.join(", ")))),
        }
        let mut seen = BTreeSet::new();
        let mut dups = BTreeSet::new();
        for q in &spec.rubric {
            if q.id.trim().is_empty() {
                out.push(Violation::new("rubric", "question with empty id"));
            } else if !seen.insert(q.id.as_str()) {
                dups.insert(q.id.as_str());
            }
        }
        if !dups.is_empty() {
            out.push(Violation::new(
                "rubric",
                format!("duplicate question ids: {}", dups.into_iter().collect::<Vec<_>>().join(", ")),
            ));
        }
    }

    if spec.initial_conditions.is_empty() {
        out.push(Violation::new("initial_conditions", "no initial conditions defined"));
    } else {
        let mut ids: Vec<u32> = spec.initial_conditions.iter().map(|ic| ic.id).collect();
        ids.sort_unstable();
        let contiguous = ids.iter().enumerate().all(|(i, id)| *id as usize == i);
        if !contiguous {
            out.push(Violation::new(
                "initial_conditions",
                format!("ids must be unique and contiguous from 0, got {ids:?}"),
            ));
        }
    }

    let mut spec_names = BTreeSet::new();
    for s in &spec.stl_specs {
        if !spec_names.insert(s.name.as_str()) {
            out.push(Violation::new("stl_specs", format!("duplicate spec name `{}`", s.name)));
        }
        if let Err(e) = stl::parse_formula(&s.formula) {
            out.push(Violation::new("stl_specs", format!("spec `{}` does not parse: {e}", s.name)));
        }
    }

    if spec.contact_threshold.is_some() && spec.contact_signal.is_none() {
        out.push(Violation::new("contact_signal", "contact_threshold given without contact_signal"));
    }
    if let Some(t) = spec.contact_threshold {
        if !t.is_finite() {
            out.push(Violation::new("contact_threshold", "must be finite"));
        }
    }

    let mc = &spec.metric_config;
    if let Err(e) = mc.sparc.validate() {
        out.push(Violation::new("metric_config.sparc", e.to_string()));
    }
    if let Err(e) = mc.peaks.validate() {
        out.push(Violation::new("metric_config.peaks", e.to_string()));
    }
    if !(mc.sample_rate_hz.is_finite() && mc.sample_rate_hz > 0.0) {
        out.push(Violation::new("metric_config.sample_rate_hz", "must be positive"));
    }
    if !mc.position_signals.is_empty() && !(2..=3).contains(&mc.position_signals.len()) {
        out.push(Violation::new("metric_config.position_signals", "expected 2 or 3 position signals"));
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Pancake rubric rows in the order of the published partial rubric.
    pub fn pancake_task() -> TaskSpec {
        TaskSpec {
            name: "pancake".into(),
            success_criteria: "Pancake is flipped, lifted and resting on the plate.".into(),
            rubric: vec![
                RubricQuestion::overall("overall", "Overall success?"),
                RubricQuestion::new("collided", "Robot collided with anything?"),
                RubricQuestion::new("right_spatula", "Right arm picked up spatula?"),
                RubricQuestion::new("left_spatula", "Left arm picked up spatula?"),
                RubricQuestion::new("flipped", "Robot flipped pancake?"),
                RubricQuestion::new("picked_up", "Robot picked up pancake?"),
            ],
            initial_conditions: (0..5)
                .map(|id| InitialCondition {
                    id,
                    description: format!("pan position {id}"),
                    reference_image: Some(format!("ic/{id}.png")),
                    in_distribution: true,
                })
                .collect(),
            stl_specs: vec![StlSpec { name: "lift".into(), formula: "always ((contact > 100) -> (z > 0.25))".into() }],
            contact_signal: Some("contact".into()),
            contact_threshold: Some(500.0),
            metric_config: MetricConfig::default(),
            failure_categories: vec![],
        }
    }
}
