//! Blind assignment plans and the session event log.
//!
//! A session is a single append-only file of LF-terminated JSON objects:
//!
//! ```text
//! {"seq":0,"ts":"2026-03-02T14:00:00Z","kind":"SessionCreated","payload":{...},"sum":"9f2c..."}
//! ```
//!
//! `sum` chains every line to the one before it, so a flipped byte anywhere
//! in the file is reported with its line number on replay. The state of a
//! session is whatever [`replay`] makes of the log; nothing else is persisted.
//! While the session is blinded the state exposes no policy identifiers
//! except through [`SessionState::plan`] and [`SessionState::records`],
//! which both return `None` until unblinding.

mod event;
mod log;
mod plan;
mod state;

pub use event::{EventBody, SessionEvent};
pub use log::{parse_log, replay, replay_events, serialize_events, EventLog, StoreError};
pub use plan::{blinded_label, create_plan, AssignmentPlan, PlanEntry, PlanError};
pub use state::{
    BlindedRollout, BlindedSessionView, EventError, Note, Progress, RolloutState, RolloutStatus, RubricResponse,
    SessionState, Unblinding,
};
