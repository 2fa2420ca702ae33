use std::collections::BTreeMap;
use std::path::PathBuf;

use regex::Regex;
use rollout_eval_core::fixtures;
use rollout_eval_core::report::{build_report, render, EvaluationReport, Format, ReportError, ReportOptions};
use rollout_eval_core::store::{replay_events, EventBody, SessionEvent};

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/energy_bar_report.md")
}

fn fixture_report() -> EvaluationReport {
    let state = replay_events(&fixtures::energy_bar_events()).unwrap();
    build_report(&state, &fixtures::energy_bar_metrics(), &ReportOptions::default()).unwrap()
}

#[test]
fn golden_markdown() {
    let md = render(&fixture_report(), Format::Markdown);
    assert_eq!(md, render(&fixture_report(), Format::Markdown));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(golden_path(), &md).unwrap();
    }
    let golden = std::fs::read_to_string(golden_path()).unwrap();
    assert_eq!(md, golden);
}

#[test]
fn appendix_counts() {
    let r = fixture_report();
    let a = &r.results.success[0];
    let b = &r.results.success[1];
    assert_eq!((a.policy.as_str(), a.successes, a.trials), ("A", 13, 20));
    assert_eq!((b.policy.as_str(), b.successes, b.trials), ("B", 14, 20));
    assert_eq!(r.failure_analysis.all_failed_ics, vec![6]);
    let md = render(&r, Format::Markdown);
    assert!(md.contains("- A: 13/20 (0.65)"));
    assert!(md.contains("- B: 14/20 (0.70)"));
    assert!(md.contains("All policies failed every run on: IC 6."));
    assert!(md.contains("IC 6 (2/2)"));
    let fa = &r.failure_analysis.policies;
    assert_eq!(fa[0].categories[0].category, "grasp");
    assert_eq!(fa[0].categories[0].count, 6);
    assert_eq!(fa[1].categories[1].count, 6);
    // B picked up the bar on every run.
    assert_eq!(r.results.rubric.cell("picked_up", "B").unwrap().yes, 20);
    let days: Vec<&Vec<u64>> = r.experiment_parameters.days.iter().map(|d| &d.runs).collect();
    assert_eq!(days, vec![&vec![12, 12], &vec![8, 8]]);
}

#[test]
fn headings_in_order() {
    let md = render(&fixture_report(), Format::Markdown);
    let pos: Vec<usize> = ["## Experiment parameters", "## Results", "## Performance", "## Failure analysis"]
        .iter()
        .map(|h| md.find(h).unwrap_or_else(|| panic!("missing {h}")))
        .collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn every_rate_matches_its_counts() {
    let md = render(&fixture_report(), Format::Markdown);
    let re = Regex::new(r"(\d+)/(\d+) \((\d+\.\d\d)\)").unwrap();
    let mut n_triples = 0;
    for c in re.captures_iter(&md) {
        let s: u64 = c[1].parse().unwrap();
        let n: u64 = c[2].parse().unwrap();
        let shown: f64 = c[3].parse().unwrap();
        let exact = s as f64 / n as f64;
        assert!((shown - exact).abs() <= 0.005 + 1e-12, "{}", &c[0]);
        n_triples += 1;
    }
    assert!(n_triples >= 10);
    // No bare two-decimal rate without its counts in the success lines.
    for line in md.lines().filter(|l| l.starts_with("- A:") || l.starts_with("- B:")) {
        assert!(re.is_match(line), "{line}");
    }
}

#[test]
fn each_completed_rollout_in_one_results_row() {
    let r = fixture_report();
    let mut idx: Vec<usize> = r.results.rollouts.iter().map(|x| x.rollout_index).collect();
    idx.sort();
    assert_eq!(idx, (0..40).collect::<Vec<_>>());
    let md = render(&r, Format::Markdown);
    let rollouts = md.split("**Rollouts:**").nth(1).unwrap().split("## Performance").next().unwrap();
    for i in 0..40 {
        let label = format!("| R-{i} |");
        assert_eq!(rollouts.matches(&label).count(), 1, "{label}");
    }
}

#[test]
fn missing_metrics_rendered() {
    let r = fixture_report();
    let row = r.performance.rows.iter().find(|row| row.policy == "A" && row.ic_id == 8 && !row.success).unwrap();
    assert_eq!(row.sparc, None);
    let md = render(&r, Format::Markdown);
    let perf = md.split("## Performance").nth(1).unwrap();
    let line = perf.lines().find(|l| l.starts_with(&format!("| {} | A | 8 |", row.label))).unwrap();
    assert_eq!(line.matches("not computed").count(), 3);
}

#[test]
fn json_roundtrip() {
    let r = fixture_report();
    let json = render(&r, Format::Json);
    let back: EvaluationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}

#[test]
fn blinded_session_rejected() {
    let state = replay_events(&fixtures::energy_bar_events_blinded()).unwrap();
    assert_eq!(build_report(&state, &BTreeMap::new(), &ReportOptions::default()), Err(ReportError::Blinded));
}

fn created_only() -> Vec<SessionEvent> {
    let mut events = fixtures::energy_bar_events_blinded();
    events.truncate(1);
    let ts = events[0].ts;
    events.push(SessionEvent::new(1, ts, EventBody::SessionUnblinded { forced: true }));
    events
}

#[test]
fn zero_rollouts_warns() {
    let state = replay_events(&created_only()).unwrap();
    let r = build_report(&state, &BTreeMap::new(), &ReportOptions::default()).unwrap();
    assert!(r.results.rollouts.is_empty());
    assert!(r.warnings.iter().any(|w| w.contains("no completed rollouts")));
    let md = render(&r, Format::Markdown);
    assert!(md.contains("**Warning:** no completed rollouts"));
    assert!(md.contains("0/0 (-)"));
}

#[test]
fn single_policy_summary() {
    let task = fixtures::energy_bar_task();
    let plan = rollout_eval_core::store::create_plan(&["solo".into()], &[0, 1], 1, 3).unwrap();
    let ts = fixtures::rollout_time(0);
    let mut events =
        vec![SessionEvent::new(0, ts, EventBody::SessionCreated { session_id: "solo".into(), task, plan })];
    for i in 0..2 {
        events.push(SessionEvent::new(
            1 + i as u64,
            ts,
            EventBody::RubricRecorded {
                rollout_index: i,
                answers: BTreeMap::from([
                    ("success".into(), i == 0),
                    ("picked_up".into(), true),
                    ("collided".into(), false),
                ]),
                failure_note: "Greifer hat zu früh geöffnet — Riegel fiel".into(),
                amend: false,
            },
        ));
    }
    events.push(SessionEvent::new(3, ts, EventBody::SessionUnblinded { forced: false }));
    let state = replay_events(&events).unwrap();
    let r = build_report(&state, &BTreeMap::new(), &ReportOptions::default()).unwrap();
    assert!(r.results.comparisons.is_empty());
    let md = render(&r, Format::Markdown);
    assert!(md.contains("**Single-policy summary:** solo: posterior Beta(2, 2)"));
    assert!(!md.contains("**Comparisons:**"));
    assert!(md.contains("zu früh geöffnet — Riegel"));
    let json = render(&r, Format::Json);
    assert!(std::str::from_utf8(json.as_bytes()).is_ok());
}
