//! Deterministic fixture data for tests and demos (feature `fixtures`).
//!
//! The energy-bar session: two policies, ten ICs, two runs per IC, with
//! policy A succeeding 13/20 times and policy B 14/20. A fails both runs of
//! ICs 4 and 6 and one run each of ICs 7, 8 and 9; B fails both runs of
//! ICs 2, 6 and 9. Day one holds the first 24 rollouts, day two (four days
//! later) the remaining 16.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};

use crate::metrics::{PeakConfig, SparcConfig};
use crate::model::{InitialCondition, MetricConfig, RubricQuestion, StlSpec, TaskSpec, Trace};
use crate::report::{compute_rollout_metrics, RolloutMetrics};
use crate::store::{create_plan, AssignmentPlan, EventBody, SessionEvent};

mod logs;
mod sparc_cases;
pub mod stl_cases;

pub use logs::random_log;
pub use sparc_cases::sparc_cases;

pub const SESSION_ID: &str = "energy-bar-ab";
pub const POLICIES: [&str; 2] = ["A", "B"];
pub const SEED: u64 = 2024;
pub const GRASP_FORMULA: &str = "always ((gripper_diff*1000 > 9) -> (z < 0.25))";

pub fn energy_bar_task() -> TaskSpec {
    TaskSpec {
        name: "energy_bar".into(),
        success_criteria: "Energy bar is on the wooden tray and the tray is on the table.".into(),
        rubric: vec![
            RubricQuestion::overall("success", "Energy bar on the tray and tray on the table?"),
            RubricQuestion::new("picked_up", "Robot picked up the energy bar?"),
            RubricQuestion::new("collided", "Robot collided with other items?"),
        ],
        initial_conditions: (0..10)
            .map(|id| InitialCondition {
                id,
                description: format!("energy bar at marked position {id}"),
                reference_image: Some(format!("ic/energy_bar_{id}.png")),
                in_distribution: true,
            })
            .collect(),
        stl_specs: vec![StlSpec { name: "grasp_height".into(), formula: GRASP_FORMULA.into() }],
        contact_signal: None,
        contact_threshold: None,
        metric_config: MetricConfig {
            sparc: SparcConfig::default(),
            peaks: PeakConfig::default(),
            position_signals: vec!["x".into(), "y".into(), "z".into()],
            sample_rate_hz: 100.0,
        },
        failure_categories: vec!["grasp".into(), "placement".into()],
    }
}

pub fn energy_bar_plan() -> AssignmentPlan {
    let policies: Vec<String> = POLICIES.iter().map(|p| p.to_string()).collect();
    create_plan(&policies, &(0..10).collect::<Vec<_>>(), 2, SEED).expect("valid plan")
}

/// Outcome of the `rep`-th run (0 or 1, in plan order) of `policy` on `ic`:
/// `(success, picked_up, failure_note)`.
pub fn outcome(policy: &str, ic: u32, rep: u32) -> (bool, bool, &'static str) {
    match (policy, ic, rep) {
        ("A", 4, 0) => (false, false, "grasp: closed the gripper above the bar"),
        ("A", 4, 1) => (false, false, "grasp: bar slipped out during lift"),
        ("A", 6, 0) => (false, false, "grasp: missed the bar"),
        ("A", 6, 1) => (false, false, "grasp: dropped the bar before the tray"),
        ("A", 7, 0) => (false, false, "grasp: dropped the bar before the tray"),
        ("A", 8, 0) => (false, true, "placement: put the bar beside the tray"),
        ("A", 9, 1) => (false, false, "grasp: closed the gripper above the bar"),
        ("B", 2, _) => (false, true, "placement: moved away from the tray"),
        ("B", 6, _) => (false, true, "placement: placed the bar on the table edge"),
        ("B", 9, _) => (false, true, "placement: moved away from the tray"),
        _ => (true, true, ""),
    }
}

fn day_start(day: u32) -> DateTime<Utc> {
    let base = Utc.with_ymd_and_hms(2026, 3, 2, 9, 0, 0).unwrap();
    base + Duration::days(4 * day as i64)
}

/// Start time of rollout `index`: the first 24 run on day one, the rest on day two.
pub fn rollout_time(index: usize) -> DateTime<Utc> {
    let (day, slot) = if index < 24 { (0, index) } else { (1, index - 24) };
    day_start(day) + Duration::minutes(4 * slot as i64)
}

/// The complete, unblinded session log.
pub fn energy_bar_events() -> Vec<SessionEvent> {
    let mut events = energy_bar_events_blinded();
    let last = events.last().expect("non-empty").ts;
    let seq = events.len() as u64;
    events.push(SessionEvent::new(seq, last + Duration::minutes(10), EventBody::SessionUnblinded { forced: false }));
    events
}

/// The session log with every rubric recorded but not yet unblinded.
pub fn energy_bar_events_blinded() -> Vec<SessionEvent> {
    let plan = energy_bar_plan();
    let task = energy_bar_task();
    let mut events = vec![SessionEvent::new(
        0,
        day_start(0) - Duration::minutes(30),
        EventBody::SessionCreated { session_id: SESSION_ID.into(), task, plan: plan.clone() },
    )];
    let mut seen: BTreeMap<(String, u32), u32> = BTreeMap::new();
    for e in &plan.entries {
        let rep = seen.entry((e.policy_id.clone(), e.ic_id)).or_insert(0);
        let (success, picked_up, note) = outcome(&e.policy_id, e.ic_id, *rep);
        *rep += 1;
        let t = rollout_time(e.rollout_index);
        let seq = events.len() as u64;
        events.push(SessionEvent::new(seq, t, EventBody::RolloutStarted { rollout_index: e.rollout_index }));
        let answers = BTreeMap::from([
            ("success".to_owned(), success),
            ("picked_up".to_owned(), picked_up),
            ("collided".to_owned(), false),
        ]);
        events.push(SessionEvent::new(
            seq + 1,
            t + Duration::minutes(3),
            EventBody::RubricRecorded {
                rollout_index: e.rollout_index,
                answers,
                failure_note: note.into(),
                amend: false,
            },
        ));
    }
    events
}

/// Synthetic reach-grasp-place trajectory at 100 Hz.
///
/// Policy B moves along a single minimum-jerk profile and closes the gripper
/// low; policy A adds a 3 Hz wobble and grasps higher, so its grasp-height
/// robustness is smaller and sometimes negative.
pub fn energy_bar_trace(policy: &str, ic: u32, rep: u32) -> Trace {
    let duration = 3.0;
    let n = 301;
    let wobbly = policy != "B";
    let depth = if wobbly { 0.12 } else { 0.2 } - 0.006 * ic as f64 + 0.003 * rep as f64;
    let times: Vec<f64> = (0..n).map(|k| k as f64 / 100.0).collect();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for &t in &times {
        let tau: f64 = t / duration;
        let s = 10.0 * tau.powi(3) - 15.0 * tau.powi(4) + 6.0 * tau.powi(5);
        let wobble = if wobbly {
            0.004 * (2.0 * std::f64::consts::PI * 3.0 * t).sin() * (std::f64::consts::PI * tau).sin()
        } else {
            0.0
        };
        x.push(0.4 * s + wobble);
        y.push(0.2 * s + 0.01 * ic as f64);
        z.push(0.35 - depth * (std::f64::consts::PI * tau).sin());
        g.push(if (0.45..0.55).contains(&tau) { 0.012 } else { 0.0 });
    }
    let signals =
        BTreeMap::from([("x".to_owned(), x), ("y".to_owned(), y), ("z".to_owned(), z), ("gripper_diff".to_owned(), g)]);
    Trace::new(times, signals).expect("valid synthetic trace")
}

/// Metrics of the synthetic trace for every rollout except policy A's first
/// run on IC 8, which is left without a trace.
pub fn energy_bar_metrics() -> BTreeMap<usize, RolloutMetrics> {
    let task = energy_bar_task();
    let mut seen: BTreeMap<(String, u32), u32> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for e in &energy_bar_plan().entries {
        let rep = seen.entry((e.policy_id.clone(), e.ic_id)).or_insert(0);
        if !(e.policy_id == "A" && e.ic_id == 8 && *rep == 0) {
            let trace = energy_bar_trace(&e.policy_id, e.ic_id, *rep);
            out.insert(e.rollout_index, compute_rollout_metrics(&task, &trace));
        }
        *rep += 1;
    }
    out
}
