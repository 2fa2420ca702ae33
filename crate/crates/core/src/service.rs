//! Blind session workflow over a directory of session logs.
//!
//! Each session lives in `<dir>/<session_id>.jsonl`; attached traces are
//! stored under the same directory and referenced by relative path. Writes to
//! one session are serialized behind a mutex, while readers take the latest
//! immutable state snapshot without waiting on writers.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_task_spec, RubricQuestion, RubricTable, TaskSpec, Trace, Violation};
use crate::report::{
    build_report, compute_rollout_metrics, EvaluationReport, NamedComparison, ReportError, ReportOptions,
    RolloutMetrics, SuccessRate,
};
use crate::store::{
    create_plan, AssignmentPlan, BlindedSessionView, EventBody, EventError, EventLog, PlanError, Progress,
    RolloutStatus, SessionState, StoreError,
};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("invalid session id `{0}`")]
    BadSessionId(String),
    #[error("session `{0}` already exists")]
    SessionExists(String),
    #[error("invalid task: {}", summarize(.0))]
    InvalidTask(Vec<Violation>),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("session is unblinded; no further assignments")]
    Finished,
    #[error("rollout {rollout_index} is not the current assignment (current: {})", current.map(|c| c.to_string()).unwrap_or_else(|| "none".into()))]
    NotCurrent { rollout_index: usize, current: Option<usize> },
    #[error("trace `{path}`: {detail}")]
    BadTrace { path: String, detail: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{}: {source}", path.display())]
    Open { path: PathBuf, source: StoreError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(v: &[Violation]) -> String {
    v.iter().map(|v| format!("{}: {}", v.field, v.message)).collect::<Vec<_>>().join("; ")
}

impl From<EventError> for ServiceError {
    fn from(e: EventError) -> Self {
        ServiceError::Store(StoreError::Event(e))
    }
}

impl ServiceError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::BadSessionId(_) => "bad_session_id",
            ServiceError::SessionExists(_) => "session_exists",
            ServiceError::InvalidTask(_) => "invalid_task",
            ServiceError::Plan(_) => "invalid_plan",
            ServiceError::Finished => "session_unblinded",
            ServiceError::NotCurrent { .. } => "not_current",
            ServiceError::BadTrace { .. } => "bad_trace",
            ServiceError::Report(ReportError::Blinded) => "session_blinded",
            ServiceError::Report(ReportError::UnknownFormat(_)) => "unknown_format",
            ServiceError::Report(_) => "report_failed",
            ServiceError::Store(StoreError::Event(e)) => match e {
                EventError::UnknownRollout(_) => "unknown_rollout",
                EventError::MissingAnswers { .. } => "missing_answers",
                EventError::UnknownQuestions { .. } => "unknown_questions",
                EventError::PendingRollouts(_) => "pending_rollouts",
                EventError::AlreadyUnblinded | EventError::AfterUnblinded { .. } => "session_unblinded",
                EventError::NothingToAmend(_) | EventError::NotAmendment(_) => "amend_mismatch",
                _ => "invalid_event",
            },
            ServiceError::Store(_) | ServiceError::Open { .. } => "storage",
            ServiceError::Io(_) => "io",
        }
    }
}

/// What the evaluator sees for the rollout they are about to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentView {
    pub session_id: String,
    pub rollout_index: usize,
    pub blinded_label: String,
    pub ic_id: u32,
    pub ic_description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
    pub in_distribution: bool,
    pub rubric: Vec<RubricQuestion>,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextAssignment {
    Assignment(AssignmentView),
    Complete { progress: Progress },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub rollout_index: usize,
    pub blinded_label: String,
    pub amended: bool,
    pub progress: Progress,
}

/// Returned by [`SessionService::finalize_session`]: the revealed plan and
/// the aggregate results over the completed rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnblindedSummary {
    pub session_id: String,
    pub forced: bool,
    pub plan: AssignmentPlan,
    pub progress: Progress,
    /// Labels of planned rollouts without a recorded rubric.
    pub excluded: Vec<String>,
    pub rubric: RubricTable,
    pub success: Vec<SuccessRate>,
    pub comparisons: Vec<NamedComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewSession {
    pub task: TaskSpec,
    pub policies: Vec<String>,
    #[serde(default = "default_reps")]
    pub repetitions: u32,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to every IC of the task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ics: Option<Vec<u32>>,
}

fn default_reps() -> u32 {
    1
}

struct Session {
    log: Mutex<EventLog>,
    snapshot: RwLock<Arc<SessionState>>,
}

impl Session {
    fn new(log: EventLog) -> Self {
        let state = log.state().expect("opened logs hold a session").clone();
        Self { log: Mutex::new(log), snapshot: RwLock::new(Arc::new(state)) }
    }

    fn snapshot(&self) -> Arc<SessionState> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn write<T>(&self, f: impl FnOnce(&mut EventLog) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let mut log = self.log.lock().expect("log lock");
        let out = f(&mut log);
        if let Some(state) = log.state() {
            let mut snap = self.snapshot.write().expect("snapshot lock");
            if snap.next_seq() != state.next_seq() {
                *snap = Arc::new(state.clone());
            }
        }
        out
    }
}

pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub struct SessionService {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl SessionService {
    /// Opens `dir`, replaying every `*.jsonl` session log in it.
    pub fn open(dir: &Path) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(dir)?;
        let mut sessions = HashMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let log = EventLog::open(&path).map_err(|source| ServiceError::Open { path: path.clone(), source })?;
            let id = log.state().expect("replayed").session_id().to_owned();
            sessions.insert(id, Arc::new(Session::new(log)));
        }
        Ok(Self { dir: dir.to_owned(), sessions: RwLock::new(sessions) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("sessions lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_owned()))
    }

    /// Latest replayed state of a session.
    pub fn snapshot(&self, id: &str) -> Result<Arc<SessionState>, ServiceError> {
        Ok(self.session(id)?.snapshot())
    }

    pub fn create_session(&self, request: &NewSession) -> Result<String, ServiceError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        self.create_session_with_id(&id, request)?;
        Ok(id)
    }

    pub fn create_session_with_id(&self, id: &str, request: &NewSession) -> Result<(), ServiceError> {
        if !valid_session_id(id) {
            return Err(ServiceError::BadSessionId(id.to_owned()));
        }
        let violations = validate_task_spec(&request.task);
        if !violations.is_empty() {
            return Err(ServiceError::InvalidTask(violations));
        }
        let ics: Vec<u32> = match &request.ics {
            Some(ics) => ics.clone(),
            None => request.task.initial_conditions.iter().map(|ic| ic.id).collect(),
        };
        let plan = create_plan(&request.policies, &ics, request.repetitions, request.seed)?;
        let mut sessions = self.sessions.write().expect("sessions lock");
        if sessions.contains_key(id) {
            return Err(ServiceError::SessionExists(id.to_owned()));
        }
        let path = self.log_path(id);
        let mut log = EventLog::create(&path).map_err(|e| match e {
            StoreError::AlreadyExists(_) => ServiceError::SessionExists(id.to_owned()),
            e => e.into(),
        })?;
        let first =
            log.record(EventBody::SessionCreated { session_id: id.to_owned(), task: request.task.clone(), plan });
        if let Err(e) = first {
            drop(log);
            let _ = std::fs::remove_file(&path);
            return Err(e.into());
        }
        sessions.insert(id.to_owned(), Arc::new(Session::new(log)));
        Ok(())
    }

    /// The first rollout without a recorded rubric. Marks it started the
    /// first time it is handed out.
    pub fn next_assignment(&self, id: &str) -> Result<NextAssignment, ServiceError> {
        let session = self.session(id)?;
        session.write(|log| {
            let state = log.state().expect("session state");
            if !state.is_blinded() {
                return Err(ServiceError::Finished);
            }
            let Some(index) = state.first_open() else {
                return Ok(NextAssignment::Complete { progress: state.progress() });
            };
            if state.rollout_state(index).map(|r| r.status()) == Some(RolloutStatus::Pending) {
                log.record(EventBody::RolloutStarted { rollout_index: index })?;
            }
            Ok(NextAssignment::Assignment(assignment_view(log.state().expect("session state"), index)))
        })
    }

    /// Records rubric answers. Without `amend` only the current assignment
    /// may be answered; with it, only an already answered rollout.
    pub fn submit_rubric(
        &self,
        id: &str,
        rollout_index: usize,
        answers: BTreeMap<String, bool>,
        failure_note: String,
        amend: bool,
    ) -> Result<SubmitAck, ServiceError> {
        let session = self.session(id)?;
        session.write(|log| {
            let state = log.state().expect("session state");
            if rollout_index >= state.len() {
                return Err(EventError::UnknownRollout(rollout_index).into());
            }
            if !amend && state.is_blinded() {
                let current = state.first_open();
                if current != Some(rollout_index) {
                    return Err(ServiceError::NotCurrent { rollout_index, current });
                }
            }
            let state = log.record(EventBody::RubricRecorded { rollout_index, answers, failure_note, amend })?;
            Ok(SubmitAck {
                rollout_index,
                blinded_label: state.label_of(rollout_index).expect("checked index").to_owned(),
                amended: amend,
                progress: state.progress(),
            })
        })
    }

    /// Copies `source` next to the session log and records it for the rollout.
    pub fn attach_trajectory(&self, id: &str, rollout_index: usize, source: &Path) -> Result<String, ServiceError> {
        let session = self.session(id)?;
        Trace::load(source)
            .map_err(|e| ServiceError::BadTrace { path: source.display().to_string(), detail: e.to_string() })?;
        session.write(|log| {
            let state = log.state().expect("session state");
            let label = state.label_of(rollout_index).ok_or(EventError::UnknownRollout(rollout_index))?.to_owned();
            let ext = source.extension().and_then(|e| e.to_str()).unwrap_or("csv");
            let rel = format!("traces/{id}/{label}.{ext}");
            let dest = self.dir.join(&rel);
            std::fs::create_dir_all(dest.parent().expect("has parent"))?;
            std::fs::copy(source, &dest)?;
            log.record(EventBody::TrajectoryAttached { rollout_index, trace_ref: rel.clone() })?;
            Ok(rel)
        })
    }

    pub fn add_note(&self, id: &str, rollout_index: Option<usize>, text: String) -> Result<(), ServiceError> {
        let session = self.session(id)?;
        session.write(|log| {
            log.record(EventBody::NoteAdded { rollout_index, text })?;
            Ok(())
        })
    }

    /// Unblinds the session and returns the revealed plan with aggregates.
    pub fn finalize_session(
        &self,
        id: &str,
        force: bool,
        options: &ReportOptions,
    ) -> Result<UnblindedSummary, ServiceError> {
        let session = self.session(id)?;
        session.write(|log| {
            if !log.state().expect("session state").is_blinded() {
                return Err(EventError::AlreadyUnblinded.into());
            }
            log.record(EventBody::SessionUnblinded { forced: force })?;
            Ok(())
        })?;
        self.summary(id, options)
    }

    pub fn summary(&self, id: &str, options: &ReportOptions) -> Result<UnblindedSummary, ServiceError> {
        let state = self.snapshot(id)?;
        let report = build_report(&state, &BTreeMap::new(), options)?;
        let plan = state.plan().expect("unblinded").clone();
        let excluded = (0..state.len())
            .filter(|&i| state.rollout_state(i).map(|r| r.status()) != Some(RolloutStatus::Complete))
            .map(|i| plan.entries[i].blinded_label.clone())
            .collect();
        Ok(UnblindedSummary {
            session_id: id.to_owned(),
            forced: state.unblinding().is_some_and(|u| u.forced),
            plan,
            progress: state.progress(),
            excluded,
            rubric: report.results.rubric,
            success: report.results.success,
            comparisons: report.results.comparisons,
        })
    }

    pub fn status(&self, id: &str) -> Result<BlindedSessionView, ServiceError> {
        Ok(self.snapshot(id)?.blinded_view())
    }

    /// Metrics for every completed rollout with an attached trace.
    pub fn rollout_metrics(&self, id: &str) -> Result<BTreeMap<usize, RolloutMetrics>, ServiceError> {
        let state = self.snapshot(id)?;
        Ok(metrics_for(&state, &self.dir))
    }

    pub fn report(&self, id: &str, options: &ReportOptions) -> Result<EvaluationReport, ServiceError> {
        let state = self.snapshot(id)?;
        if state.is_blinded() {
            return Err(ReportError::Blinded.into());
        }
        let metrics = metrics_for(&state, &self.dir);
        Ok(build_report(&state, &metrics, options)?)
    }
}

/// Loads each attached trace relative to `base` and computes its metrics.
/// Unreadable traces yield metrics whose `errors` explain why.
pub fn metrics_for(state: &SessionState, base: &Path) -> BTreeMap<usize, RolloutMetrics> {
    let mut out = BTreeMap::new();
    for i in 0..state.len() {
        let Some(r) = state.rollout_state(i) else { continue };
        let Some(rel) = &r.trace_ref else { continue };
        let m = match Trace::load(&base.join(rel)) {
            Ok(trace) => compute_rollout_metrics(state.task(), &trace),
            Err(e) => {
                let mut m = RolloutMetrics::default();
                m.errors.insert("trace".into(), e.to_string());
                m
            }
        };
        out.insert(i, m);
    }
    out
}

pub fn assignment_view(state: &SessionState, index: usize) -> AssignmentView {
    let ic_id = state.ic_of(index).expect("index in plan");
    let ic = state.task().initial_condition(ic_id);
    AssignmentView {
        session_id: state.session_id().to_owned(),
        rollout_index: index,
        blinded_label: state.label_of(index).expect("index in plan").to_owned(),
        ic_id,
        ic_description: ic.map(|ic| ic.description.clone()).unwrap_or_default(),
        reference_image: ic.and_then(|ic| ic.reference_image.clone()),
        in_distribution: ic.is_none_or(|ic| ic.in_distribution),
        rubric: state.task().rubric.clone(),
        progress: state.progress(),
    }
}
