use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::event::{EventBody, SessionEvent};
use super::state::{EventError, SessionState};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: truncated (missing line terminator)")]
    Truncated { line: usize },
    #[error("line {line}: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error("line {line}: checksum mismatch")]
    Checksum { line: usize },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: EventError },
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("log already exists: {}", .0.display())]
    AlreadyExists(PathBuf),
}

impl StoreError {
    /// 1-based line number of the offending log line, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            StoreError::Truncated { line }
            | StoreError::Corrupt { line, .. }
            | StoreError::Checksum { line }
            | StoreError::Invalid { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// On-disk shape of one log line. `sum` chains each line to its predecessor:
/// `sha256(previous sum ++ line bytes with the sum field removed)`, hex
/// encoded. It is always the last field, so the check runs on raw bytes and
/// catches edits that would parse to the same values.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    seq: u64,
    ts: DateTime<Utc>,
    kind: String,
    payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sum: Option<String>,
}

fn chain(prev: &str, unsummed: &str) -> String {
    let mut h = Sha256::new();
    h.update(prev.as_bytes());
    h.update(unsummed.as_bytes());
    hex::encode(h.finalize())
}

fn to_wire(event: &SessionEvent) -> Wire {
    let Value::Object(mut tagged) = serde_json::to_value(&event.body).expect("event bodies serialize") else {
        unreachable!("adjacently tagged enum serializes to an object")
    };
    Wire {
        seq: event.seq,
        ts: event.ts,
        kind: event.body.kind().to_owned(),
        payload: tagged.remove("payload").unwrap_or(Value::Object(Default::default())),
        sum: None,
    }
}

/// `,"sum":"<64 hex digits>"}` closing every line.
const SUM_SUFFIX_LEN: usize = 8 + 64 + 2;

/// The hex sum at the end of a raw line, if the line ends in the expected shape.
fn split_sum(raw: &[u8]) -> Option<&str> {
    let tail = raw.get(raw.len().checked_sub(SUM_SUFFIX_LEN)?..)?;
    let (key, rest) = tail.split_at(8);
    let (digits, close) = rest.split_at(64);
    let ok = key == b",\"sum\":\"" && close == b"\"}" && digits.iter().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
    ok.then(|| std::str::from_utf8(digits).expect("ascii hex"))
}

/// Serializes one event as a log line (without the trailing LF), returning
/// the line and its chain sum.
fn encode_line(event: &SessionEvent, prev_sum: &str) -> (String, String) {
    let mut wire = to_wire(event);
    let unsummed = serde_json::to_string(&wire).expect("wire serializes");
    let sum = chain(prev_sum, &unsummed);
    wire.sum = Some(sum.clone());
    (serde_json::to_string(&wire).expect("wire serializes"), sum)
}

/// Serializes a whole event sequence in log format.
pub fn serialize_events(events: &[SessionEvent]) -> String {
    let mut out = String::new();
    let mut sum = String::new();
    for e in events {
        let (line, s) = encode_line(e, &sum);
        out.push_str(&line);
        out.push('\n');
        sum = s;
    }
    out
}

/// Parses log bytes into events, verifying framing and the checksum chain.
/// Semantic validation is left to [`replay_events`].
pub fn parse_log(bytes: &[u8]) -> Result<Vec<SessionEvent>, StoreError> {
    Ok(parse_with_sum(bytes)?.0)
}

fn parse_with_sum(bytes: &[u8]) -> Result<(Vec<SessionEvent>, String), StoreError> {
    let mut events = Vec::new();
    let mut prev = String::new();
    let mut rest = bytes;
    let mut line_no = 0;
    while !rest.is_empty() {
        line_no += 1;
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(StoreError::Truncated { line: line_no });
        };
        let raw = &rest[..end];
        rest = &rest[end + 1..];
        let corrupt = |detail: String| StoreError::Corrupt { line: line_no, detail };
        let Some(sum) = split_sum(raw) else {
            return Err(corrupt("missing or malformed sum".into()));
        };
        let head = &raw[..raw.len() - SUM_SUFFIX_LEN];
        let mut h = Sha256::new();
        h.update(prev.as_bytes());
        h.update(head);
        h.update(b"}");
        if hex::encode(h.finalize()) != sum {
            return Err(StoreError::Checksum { line: line_no });
        }
        let text = std::str::from_utf8(raw).map_err(|e| corrupt(format!("invalid UTF-8: {e}")))?;
        let wire: Wire = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        let tagged = serde_json::json!({ "kind": wire.kind, "payload": wire.payload });
        let body: EventBody = serde_json::from_value(tagged).map_err(|e| corrupt(e.to_string()))?;
        events.push(SessionEvent::new(wire.seq, wire.ts, body));
        prev = sum.to_owned();
    }
    Ok((events, prev))
}

/// Rebuilds session state from an event sequence. Errors carry the 1-based
/// position of the offending event as its line number.
pub fn replay_events(events: &[SessionEvent]) -> Result<SessionState, StoreError> {
    let Some(first) = events.first() else {
        return Err(EventError::NoSessionCreated.into());
    };
    let mut state = SessionState::from_first(first).map_err(|source| StoreError::Invalid { line: 1, source })?;
    for (i, e) in events.iter().enumerate().skip(1) {
        state.apply(e).map_err(|source| StoreError::Invalid { line: i + 1, source })?;
    }
    Ok(state)
}

pub fn replay(bytes: &[u8]) -> Result<SessionState, StoreError> {
    replay_events(&parse_log(bytes)?)
}

/// An append-only session log, optionally backed by a file.
#[derive(Debug)]
pub struct EventLog {
    path: Option<PathBuf>,
    file: Option<File>,
    events: Vec<SessionEvent>,
    last_sum: String,
    state: Option<SessionState>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self { path: None, file: None, events: Vec::new(), last_sum: String::new(), state: None }
    }

    /// Creates a new, empty log file. Fails if `path` exists.
    pub fn create(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new().append(true).create_new(true).open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::AlreadyExists => StoreError::AlreadyExists(path.to_owned()),
            _ => StoreError::Io(e),
        })?;
        Ok(Self { path: Some(path.to_owned()), file: Some(file), ..Self::in_memory() })
    }

    /// Opens and replays an existing log for further appends.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let bytes = std::fs::read(path)?;
        let (events, last_sum) = parse_with_sum(&bytes)?;
        let state = replay_events(&events)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { path: Some(path.to_owned()), file: Some(file), events, last_sum, state: Some(state) })
    }

    /// Validates and appends one event. Nothing is written if it is rejected.
    pub fn append(&mut self, event: SessionEvent) -> Result<&SessionState, StoreError> {
        let fresh = match &self.state {
            None => Some(SessionState::from_first(&event)?),
            Some(state) => {
                state.check(&event)?;
                None
            }
        };
        let (line, sum) = encode_line(&event, &self.last_sum);
        if let Some(file) = &mut self.file {
            file.write_all(format!("{line}\n").as_bytes())?;
            file.sync_data()?;
        }
        match fresh {
            Some(s) => self.state = Some(s),
            None => {
                self.state.as_mut().expect("state exists after first event").apply(&event).expect("event was checked")
            }
        }
        self.last_sum = sum;
        self.events.push(event);
        Ok(self.state.as_ref().expect("state set"))
    }

    /// Appends `body` with the next sequence number and the current time.
    pub fn record(&mut self, body: EventBody) -> Result<&SessionState, StoreError> {
        let seq = self.events.len() as u64;
        self.append(SessionEvent::new(seq, Utc::now(), body))
    }

    pub fn state(&self) -> Option<&SessionState> {
        self.state.as_ref()
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Directory that relative trace references resolve against.
    pub fn base_dir(&self) -> Option<&Path> {
        self.path.as_deref().and_then(Path::parent)
    }

    pub fn to_text(&self) -> String {
        serialize_events(&self.events)
    }
}
