use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::task::RubricQuestion;

/// One evaluated rollout as filled out by the evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub rollout_index: usize,
    pub policy_id: String,
    pub ic_id: u32,
    pub rubric_responses: BTreeMap<String, bool>,
    #[serde(default)]
    pub failure_note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_ref: Option<String>,
    pub timestamp: DateTime<Utc>,
}

impl RolloutRecord {
    /// Question ids of `rubric` with no recorded answer.
    pub fn missing_questions(&self, rubric: &[RubricQuestion]) -> Vec<String> {
        rubric.iter().filter(|q| !self.rubric_responses.contains_key(&q.id)).map(|q| q.id.clone()).collect()
    }

    pub fn answer(&self, question_id: &str) -> Option<bool> {
        self.rubric_responses.get(question_id).copied()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RubricError {
    #[error("rollout {rollout_index} is incomplete, missing: {}", missing.join(", "))]
    Incomplete { rollout_index: usize, missing: Vec<String> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct YesNo {
    pub yes: u32,
    pub no: u32,
}

impl YesNo {
    pub fn total(&self) -> u32 {
        self.yes + self.no
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricRow {
    pub question_id: String,
    pub text: String,
    pub is_overall_success: bool,
    /// Parallel to [`RubricTable::policies`].
    pub counts: Vec<YesNo>,
}

/// Yes/no counts per rubric question and policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricTable {
    pub policies: Vec<String>,
    pub rows: Vec<RubricRow>,
}

impl RubricTable {
    pub fn cell(&self, question_id: &str, policy: &str) -> Option<YesNo> {
        let col = self.policies.iter().position(|p| p == policy)?;
        self.rows.iter().find(|r| r.question_id == question_id).map(|r| r.counts[col])
    }

    pub fn overall(&self, policy: &str) -> Option<YesNo> {
        let col = self.policies.iter().position(|p| p == policy)?;
        self.rows.iter().find(|r| r.is_overall_success).map(|r| r.counts[col])
    }
}

/// Counts yes/no answers per question (rubric order) and policy (sorted).
///
/// Policies listed in `policies` always get a column, even with no records.
pub fn aggregate_rubric(
    rubric: &[RubricQuestion],
    policies: &[String],
    records: &[RolloutRecord],
) -> Result<RubricTable, RubricError> {
    for r in records {
        let missing = r.missing_questions(rubric);
        if !missing.is_empty() {
            return Err(RubricError::Incomplete { rollout_index: r.rollout_index, missing });
        }
    }
    let mut columns: BTreeMap<&str, usize> = policies.iter().map(|p| (p.as_str(), 0)).collect();
    for r in records {
        columns.entry(r.policy_id.as_str()).or_insert(0);
    }
    for (i, v) in columns.values_mut().enumerate() {
        *v = i;
    }
    let mut rows: Vec<RubricRow> = rubric
        .iter()
        .map(|q| RubricRow {
            question_id: q.id.clone(),
            text: q.text.clone(),
            is_overall_success: q.is_overall_success,
            counts: vec![YesNo::default(); columns.len()],
        })
        .collect();
    for r in records {
        let col = columns[r.policy_id.as_str()];
        for (row, q) in rows.iter_mut().zip(rubric) {
            let cell = &mut row.counts[col];
            if r.rubric_responses[&q.id] {
                cell.yes += 1;
            } else {
                cell.no += 1;
            }
        }
    }
    Ok(RubricTable { policies: columns.keys().map(|s| s.to_string()).collect(), rows })
}
