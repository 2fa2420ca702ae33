use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::plan::AssignmentPlan;
use crate::model::TaskSpec;

// A log holds exactly one SessionCreated, so its size is not worth boxing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    SessionCreated {
        session_id: String,
        task: TaskSpec,
        plan: AssignmentPlan,
    },
    RolloutStarted {
        rollout_index: usize,
    },
    RubricRecorded {
        rollout_index: usize,
        answers: BTreeMap<String, bool>,
        #[serde(default)]
        failure_note: String,
        /// Set when the answers supersede an earlier submission.
        #[serde(default)]
        amend: bool,
    },
    TrajectoryAttached {
        rollout_index: usize,
        /// Relative to the directory holding the log.
        trace_ref: String,
    },
    SessionUnblinded {
        /// True when the session was closed with rollouts still pending.
        forced: bool,
    },
    NoteAdded {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rollout_index: Option<usize>,
        text: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::SessionCreated { .. } => "SessionCreated",
            EventBody::RolloutStarted { .. } => "RolloutStarted",
            EventBody::RubricRecorded { .. } => "RubricRecorded",
            EventBody::TrajectoryAttached { .. } => "TrajectoryAttached",
            EventBody::SessionUnblinded { .. } => "SessionUnblinded",
            EventBody::NoteAdded { .. } => "NoteAdded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub ts: DateTime<Utc>,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionEvent {
    pub fn new(seq: u64, ts: DateTime<Utc>, body: EventBody) -> Self {
        Self { seq, ts, body }
    }
}
