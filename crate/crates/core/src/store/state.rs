use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{EventBody, SessionEvent};
use super::plan::AssignmentPlan;
use crate::model::{validate_task_spec, RolloutRecord, TaskSpec};

/// A semantic violation of the event-log rules.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("no SessionCreated")]
    NoSessionCreated,
    #[error("SessionCreated may only appear as the first event")]
    DuplicateSessionCreated,
    #[error("sequence gap: expected {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("{kind} after SessionUnblinded")]
    AfterUnblinded { kind: &'static str },
    #[error("unknown rollout {0}")]
    UnknownRollout(usize),
    #[error("rollout {0} already started")]
    AlreadyStarted(usize),
    #[error("rollout {rollout_index} missing answers for: {}", missing.join(", "))]
    MissingAnswers { rollout_index: usize, missing: Vec<String> },
    #[error("rollout {rollout_index} has unknown questions: {}", unknown.join(", "))]
    UnknownQuestions { rollout_index: usize, unknown: Vec<String> },
    #[error("rollout {0} already has a rubric; resubmit as an amendment")]
    NotAmendment(usize),
    #[error("rollout {0} has no rubric to amend")]
    NothingToAmend(usize),
    #[error("pending rollouts: {}", join_indices(.0))]
    PendingRollouts(Vec<usize>),
    #[error("session already unblinded")]
    AlreadyUnblinded,
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("trace reference must be a relative path: {0}")]
    BadTraceRef(String),
}

fn join_indices(v: &[usize]) -> String {
    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutStatus {
    Pending,
    /// Started but no rubric recorded yet.
    Incomplete,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricResponse {
    pub answers: BTreeMap<String, bool>,
    pub failure_note: String,
    pub recorded_at: DateTime<Utc>,
    pub seq: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutState {
    pub started_at: Option<DateTime<Utc>>,
    /// Every submission in order; the last one is authoritative.
    pub history: Vec<RubricResponse>,
    pub trace_ref: Option<String>,
}

impl RolloutState {
    pub fn status(&self) -> RolloutStatus {
        if !self.history.is_empty() {
            RolloutStatus::Complete
        } else if self.started_at.is_some() {
            RolloutStatus::Incomplete
        } else {
            RolloutStatus::Pending
        }
    }

    pub fn latest(&self) -> Option<&RubricResponse> {
        self.history.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout_index: Option<usize>,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unblinding {
    pub at: DateTime<Utc>,
    pub forced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

/// Session state reconstructed from the event log.
///
/// Deliberately not `Serialize`: the only serializable projections are
/// [`BlindedSessionView`] and, once unblinded, the plan and records.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    session_id: String,
    created_at: DateTime<Utc>,
    task: TaskSpec,
    plan: AssignmentPlan,
    rollouts: Vec<RolloutState>,
    notes: Vec<Note>,
    unblinding: Option<Unblinding>,
    next_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindedRollout {
    pub rollout_index: usize,
    pub blinded_label: String,
    pub ic_id: u32,
    pub status: RolloutStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<BTreeMap<String, bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_note: Option<String>,
    pub revisions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_ref: Option<String>,
}

/// Everything an evaluator may see about a session without learning which
/// policy ran which rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindedSessionView {
    pub session_id: String,
    pub task_name: String,
    pub created_at: DateTime<Utc>,
    pub blinded: bool,
    pub progress: Progress,
    pub rollouts: Vec<BlindedRollout>,
    pub notes: Vec<Note>,
}

impl SessionState {
    /// Starts a state from the first event of a log.
    pub fn from_first(event: &SessionEvent) -> Result<Self, EventError> {
        if event.seq != 0 {
            return Err(EventError::SequenceGap { expected: 0, got: event.seq });
        }
        let EventBody::SessionCreated { session_id, task, plan } = &event.body else {
            return Err(EventError::NoSessionCreated);
        };
        let violations = validate_task_spec(task);
        if let Some(v) = violations.first() {
            return Err(EventError::InvalidTask(format!("{}: {}", v.field, v.message)));
        }
        plan.check().map_err(EventError::InvalidPlan)?;
        if let Some(ic) = plan.ics.iter().find(|ic| task.initial_condition(**ic).is_none()) {
            return Err(EventError::InvalidPlan(format!("initial condition {ic} not in task")));
        }
        Ok(Self {
            session_id: session_id.clone(),
            created_at: event.ts,
            task: task.clone(),
            plan: plan.clone(),
            rollouts: vec![RolloutState::default(); plan.len()],
            notes: Vec::new(),
            unblinding: None,
            next_seq: 1,
        })
    }

    /// Checks `event` against the current state without applying it.
    pub fn check(&self, event: &SessionEvent) -> Result<(), EventError> {
        if event.seq != self.next_seq {
            return Err(EventError::SequenceGap { expected: self.next_seq, got: event.seq });
        }
        if self.unblinding.is_some() {
            return match event.body {
                EventBody::NoteAdded { rollout_index, .. } => self.check_index(rollout_index),
                EventBody::SessionUnblinded { .. } => Err(EventError::AlreadyUnblinded),
                ref other => Err(EventError::AfterUnblinded { kind: other.kind() }),
            };
        }
        match &event.body {
            EventBody::SessionCreated { .. } => Err(EventError::DuplicateSessionCreated),
            EventBody::RolloutStarted { rollout_index } => {
                let r = self.rollout(*rollout_index)?;
                if r.status() != RolloutStatus::Pending {
                    return Err(EventError::AlreadyStarted(*rollout_index));
                }
                Ok(())
            }
            EventBody::RubricRecorded { rollout_index, answers, amend, .. } => {
                let r = self.rollout(*rollout_index)?;
                let missing: Vec<String> =
                    self.task.question_ids().filter(|q| !answers.contains_key(*q)).map(str::to_owned).collect();
                if !missing.is_empty() {
                    return Err(EventError::MissingAnswers { rollout_index: *rollout_index, missing });
                }
                let unknown: Vec<String> =
                    answers.keys().filter(|k| !self.task.question_ids().any(|q| q == k.as_str())).cloned().collect();
                if !unknown.is_empty() {
                    return Err(EventError::UnknownQuestions { rollout_index: *rollout_index, unknown });
                }
                match (r.history.is_empty(), amend) {
                    (false, false) => Err(EventError::NotAmendment(*rollout_index)),
                    (true, true) => Err(EventError::NothingToAmend(*rollout_index)),
                    _ => Ok(()),
                }
            }
            EventBody::TrajectoryAttached { rollout_index, trace_ref } => {
                self.rollout(*rollout_index)?;
                let p = std::path::Path::new(trace_ref);
                if trace_ref.is_empty() || p.is_absolute() {
                    return Err(EventError::BadTraceRef(trace_ref.clone()));
                }
                Ok(())
            }
            EventBody::SessionUnblinded { forced } => {
                let pending: Vec<usize> = self
                    .rollouts
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.status() != RolloutStatus::Complete)
                    .map(|(i, _)| i)
                    .collect();
                if !forced && !pending.is_empty() {
                    return Err(EventError::PendingRollouts(pending));
                }
                Ok(())
            }
            EventBody::NoteAdded { rollout_index, .. } => self.check_index(*rollout_index),
        }
    }

    /// Applies `event` after [`check`](Self::check)ing it.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), EventError> {
        self.check(event)?;
        match &event.body {
            EventBody::SessionCreated { .. } => unreachable!("rejected by check"),
            EventBody::RolloutStarted { rollout_index } => {
                self.rollouts[*rollout_index].started_at = Some(event.ts);
            }
            EventBody::RubricRecorded { rollout_index, answers, failure_note, .. } => {
                let r = &mut self.rollouts[*rollout_index];
                r.started_at.get_or_insert(event.ts);
                r.history.push(RubricResponse {
                    answers: answers.clone(),
                    failure_note: failure_note.clone(),
                    recorded_at: event.ts,
                    seq: event.seq,
                });
            }
            EventBody::TrajectoryAttached { rollout_index, trace_ref } => {
                self.rollouts[*rollout_index].trace_ref = Some(trace_ref.clone());
            }
            EventBody::SessionUnblinded { forced } => {
                self.unblinding = Some(Unblinding { at: event.ts, forced: *forced });
            }
            EventBody::NoteAdded { rollout_index, text } => {
                self.notes.push(Note { at: event.ts, rollout_index: *rollout_index, text: text.clone() })
            }
        }
        self.next_seq += 1;
        Ok(())
    }

    fn rollout(&self, index: usize) -> Result<&RolloutState, EventError> {
        self.rollouts.get(index).ok_or(EventError::UnknownRollout(index))
    }

    fn check_index(&self, index: Option<usize>) -> Result<(), EventError> {
        match index {
            Some(i) => self.rollout(i).map(|_| ()),
            None => Ok(()),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    /// Number of events applied so far, i.e. the next sequence number.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn is_blinded(&self) -> bool {
        self.unblinding.is_none()
    }

    pub fn unblinding(&self) -> Option<Unblinding> {
        self.unblinding
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn rollout_state(&self, index: usize) -> Option<&RolloutState> {
        self.rollouts.get(index)
    }

    pub fn ic_of(&self, index: usize) -> Option<u32> {
        self.plan.entry(index).map(|e| e.ic_id)
    }

    pub fn label_of(&self, index: usize) -> Option<&str> {
        self.plan.entry(index).map(|e| e.blinded_label.as_str())
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn progress(&self) -> Progress {
        Progress {
            completed: self.rollouts.iter().filter(|r| r.status() == RolloutStatus::Complete).count(),
            total: self.rollouts.len(),
        }
    }

    /// First rollout in plan order without a recorded rubric.
    pub fn first_open(&self) -> Option<usize> {
        self.rollouts.iter().position(|r| r.status() != RolloutStatus::Complete)
    }

    pub fn indices_with(&self, status: RolloutStatus) -> Vec<usize> {
        self.rollouts.iter().enumerate().filter(|(_, r)| r.status() == status).map(|(i, _)| i).collect()
    }

    /// The plan with its policy mapping; `None` while blinded.
    pub fn plan(&self) -> Option<&AssignmentPlan> {
        self.unblinding.map(|_| &self.plan)
    }

    /// Completed rollouts as records; `None` while blinded.
    pub fn records(&self) -> Option<Vec<RolloutRecord>> {
        self.unblinding?;
        Some(
            self.plan
                .entries
                .iter()
                .zip(&self.rollouts)
                .filter_map(|(e, r)| {
                    let latest = r.latest()?;
                    Some(RolloutRecord {
                        rollout_index: e.rollout_index,
                        policy_id: e.policy_id.clone(),
                        ic_id: e.ic_id,
                        rubric_responses: latest.answers.clone(),
                        failure_note: latest.failure_note.clone(),
                        trace_ref: r.trace_ref.clone(),
                        timestamp: latest.recorded_at,
                    })
                })
                .collect(),
        )
    }

    pub fn blinded_view(&self) -> BlindedSessionView {
        BlindedSessionView {
            session_id: self.session_id.clone(),
            task_name: self.task.name.clone(),
            created_at: self.created_at,
            blinded: self.is_blinded(),
            progress: self.progress(),
            rollouts: self
                .plan
                .entries
                .iter()
                .zip(&self.rollouts)
                .map(|(e, r)| BlindedRollout {
                    rollout_index: e.rollout_index,
                    blinded_label: e.blinded_label.clone(),
                    ic_id: e.ic_id,
                    status: r.status(),
                    answers: r.latest().map(|l| l.answers.clone()),
                    failure_note: r.latest().map(|l| l.failure_note.clone()),
                    revisions: r.history.len(),
                    trace_ref: r.trace_ref.clone(),
                })
                .collect(),
            notes: self.notes.clone(),
        }
    }
}
