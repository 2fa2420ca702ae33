//! Random but valid session logs.

use std::collections::BTreeMap;

use chrono::{Duration, TimeZone, Utc};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::store::{create_plan, EventBody, EventLog, RolloutStatus, SessionEvent};

/// Builds a random but valid session log by driving an in-memory `EventLog`
/// with random legal actions.
pub fn random_log(seed: u64) -> (EventLog, Vec<String>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let n_pol = rng.random_range(1..=3);
    let policies: Vec<String> = (0..n_pol).map(|i| format!("pol{i}x{:06x}", rng.random::<u32>() & 0xffffff)).collect();
    let n_ic = rng.random_range(1..=4u32);
    let reps = rng.random_range(1..=2);
    let mut task = super::energy_bar_task();
    task.initial_conditions.truncate(n_ic as usize);
    let plan = create_plan(&policies, &(0..n_ic).collect::<Vec<_>>(), reps, rng.random()).unwrap();
    let t0 = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
    let mut log = EventLog::in_memory();
    let mut clock = 0i64;
    let mut tick = |rng: &mut StdRng| {
        clock += rng.random_range(1..5000);
        t0 + Duration::milliseconds(clock)
    };
    log.append(SessionEvent::new(
        0,
        tick(&mut rng),
        EventBody::SessionCreated { session_id: format!("s{seed}"), task: task.clone(), plan },
    ))
    .unwrap();

    let steps = rng.random_range(0..60);
    for _ in 0..steps {
        let state = log.state().unwrap();
        if !state.is_blinded() {
            break;
        }
        let n = state.len();
        let idx = rng.random_range(0..n);
        let status = state.rollout_state(idx).unwrap().status();
        let answers: BTreeMap<String, bool> = task.rubric.iter().map(|q| (q.id.clone(), rng.random())).collect();
        let note = if rng.random_bool(0.3) { "grasp: slipped ✓".to_owned() } else { String::new() };
        let body = match rng.random_range(0..10) {
            0..=2 if status == RolloutStatus::Pending => EventBody::RolloutStarted { rollout_index: idx },
            0..=5 => EventBody::RubricRecorded {
                rollout_index: idx,
                answers,
                failure_note: note,
                amend: status == RolloutStatus::Complete,
            },
            6 => EventBody::TrajectoryAttached { rollout_index: idx, trace_ref: format!("traces/R-{idx}.csv") },
            7 => EventBody::NoteAdded {
                rollout_index: rng.random_bool(0.5).then_some(idx),
                text: format!("note {}", rng.random::<u16>()),
            },
            8 => EventBody::SessionUnblinded { forced: state.progress().completed < n },
            _ => continue,
        };
        let seq = log.len() as u64;
        let ts = tick(&mut rng);
        log.append(SessionEvent::new(seq, ts, body)).unwrap();
    }
    if !log.state().unwrap().is_blinded() && rng.random_bool(0.5) {
        let seq = log.len() as u64;
        let ts = tick(&mut rng);
        log.append(SessionEvent::new(
            seq,
            ts,
            EventBody::NoteAdded { rollout_index: None, text: "after unblinding".into() },
        ))
        .unwrap();
    }
    (log, policies)
}
