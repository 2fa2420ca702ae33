//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.

// NaN must fail a check, so checks are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Body;
use axum::http::{Method, Request};
use http_body_util::BodyExt;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rollout_eval::http::router;
use rollout_eval_core::fixtures::{self, random_log, sparc_cases, stl_cases};
use rollout_eval_core::metrics::{sparc, SparcConfig, SpeedProfile};
use rollout_eval_core::report::{build_report, render, Format, ReportOptions};
use rollout_eval_core::service::SessionService;
use rollout_eval_core::stats::{compare, prob_superior, BetaPosterior, Counts};
use rollout_eval_core::stl::{eval_boolean, eval_robustness, parse_formula, robustness};
use rollout_eval_core::store::{create_plan, replay, replay_events, StoreError};
use rollout_eval_core::Trace;
use serde_json::json;
use tower::ServiceExt;

type Verdict = Result<String, String>;
type Check = fn() -> Verdict;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const GOLDEN: &str = include_str!("../../core/tests/golden/energy_bar_report.md");

fn beta(a: f64, b: f64) -> BetaPosterior {
    BetaPosterior::new(a, b).unwrap()
}

fn bayes_point_value() -> Verdict {
    let start = Instant::now();
    let p = prob_superior(&beta(16.0, 4.0), &beta(12.0, 7.0));
    let elapsed = start.elapsed().as_secs_f64();
    ensure!((p - 0.11).abs() <= 0.01, "P = {p}");
    ensure!(elapsed < 1.0, "took {elapsed:.3} s");
    Ok(format!("P(B > A) = {p:.6}, {:.2} ms", elapsed * 1e3))
}

fn sample_size_sensitivity() -> Verdict {
    let run = |a: (u64, u64), b: (u64, u64)| {
        compare(Counts::new(a.0, a.1), Counts::new(b.0, b.1), BetaPosterior::uniform(), 0.95, 20_000, 42).unwrap()
    };
    let small = run((15, 3), (11, 6));
    let tiny = run((5, 1), (6, 3));
    let large = run((150, 30), (110, 60));
    ensure!(!small.excludes_zero, "15/18 vs 11/17 interval {:?}", small.diff_interval);
    ensure!(!tiny.excludes_zero, "5/6 vs 6/9 interval {:?}", tiny.diff_interval);
    ensure!(large.excludes_zero, "150/180 vs 110/170 interval {:?}", large.diff_interval);
    ensure!(run((150, 30), (110, 60)) == large, "same seed gave different results");
    Ok(format!("intervals {:.3?}, {:.3?}, {:.3?}", small.diff_interval, tiny.diff_interval, large.diff_interval))
}

fn symmetry() -> Verdict {
    let mut rng = StdRng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p = beta(rng.random_range(0.3..300.0), rng.random_range(0.3..300.0));
        worst = worst.max((prob_superior(&p, &p) - 0.5).abs());
    }
    ensure!(worst <= 1e-6, "max |P - 0.5| = {worst:e}");
    Ok(format!("20 posteriors, max |P - 0.5| = {worst:.1e}"))
}

fn stl_modes() -> Verdict {
    let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
    let z: Vec<f64> = (0..50).map(|k| 0.4 * (k as f64 * 0.3).sin().abs()).collect();
    let bowl = Trace::new(
        times.clone(),
        BTreeMap::from([("contact".to_owned(), vec![20.0; 50]), ("z".to_owned(), z.clone())]),
    )
    .unwrap();
    let gripper =
        Trace::new(times, BTreeMap::from([("gripper_diff".to_owned(), vec![0.0; 50]), ("z".to_owned(), z)])).unwrap();
    let rho_bowl = robustness(&parse_formula("always ((contact > 100) -> (z > 0.25))").unwrap(), &bowl).unwrap();
    let rho_grip = robustness(&parse_formula(fixtures::GRASP_FORMULA).unwrap(), &gripper).unwrap();
    ensure!(rho_bowl == 80.0, "bowl formula gave {rho_bowl}");
    ensure!(rho_grip == 9.0, "gripper formula gave {rho_grip}");
    Ok(format!("bowl = {rho_bowl}, gripper = {rho_grip}"))
}

fn stl_oracle() -> Verdict {
    let mut rng = StdRng::seed_from_u64(1);
    let (mut both_ok, mut both_err, mut worst) = (0, 0, 0.0f64);
    for case in 0..1000 {
        let (tr, f, i) = stl_cases::random_case(&mut rng);
        let t0 = tr.times()[i];
        match (stl_cases::oracle(&f, &tr, i), eval_robustness(&f, &tr, t0)) {
            (Some(e), Ok(g)) => {
                worst = worst.max((e - g).abs());
                ensure!((e - g).abs() <= 1e-12, "case {case}: oracle {e}, monitor {g}: {f}");
                let b = eval_boolean(&f, &tr, t0).map_err(|e| format!("case {case}: boolean failed: {e}"))?;
                ensure!(b == (g >= 0.0), "case {case}: boolean {b}, rho {g}: {f}");
                ensure!(parse_formula(&f.to_string()).ok() == Some(f.clone()), "case {case}: round trip: {f}");
                both_ok += 1;
            }
            (None, Err(_)) => both_err += 1,
            (e, g) => return Err(format!("case {case}: oracle {e:?}, monitor {g:?}: {f}")),
        }
    }
    ensure!(both_ok >= 800, "only {both_ok} cases evaluated");
    Ok(format!("{both_ok} evaluated, {both_err} rejected by both, max diff {worst:.1e}"))
}

fn sparc_criterion() -> Verdict {
    let config = SparcConfig::default();
    let mut worst: f64 = 0.0;
    let cases = sparc_cases();
    for (name, p, expected) in &cases {
        let got = sparc(p, &config).map_err(|e| format!("{name}: {e}"))?;
        worst = worst.max((got - expected).abs());
        ensure!((got - expected).abs() < 1e-6, "{name}: {got} vs {expected}");
        for k in [0.25, 2.0, 1024.0] {
            let scaled =
                SpeedProfile::from_samples(p.speed().iter().map(|v| v * k).collect(), p.sample_rate()).unwrap();
            let s = sparc(&scaled, &config).unwrap();
            ensure!(s.to_bits() == got.to_bits(), "{name} x{k}: {s} vs {got}");
        }
        for k in [0.1, 3.0, 7e3] {
            let scaled =
                SpeedProfile::from_samples(p.speed().iter().map(|v| v * k).collect(), p.sample_rate()).unwrap();
            let s = sparc(&scaled, &config).unwrap();
            ensure!((s - got).abs() <= 1e-12, "{name} x{k}: {s} vs {got}");
        }
    }
    let value = |n: &str| cases.iter().find(|c| c.0 == n).map(|c| sparc(&c.1, &config).unwrap()).unwrap();
    let (one, two) = (value("single_bump"), value("two_bumps"));
    ensure!(two < one, "two bumps {two} not below one bump {one}");
    Ok(format!("{} profiles, max diff {worst:.1e}; one bump {one:.4} > two bumps {two:.4}", cases.len()))
}

async fn fuzz_http(rounds: usize) -> Result<usize, String> {
    let dir = tempfile::tempdir().unwrap();
    let policies = ["pol-hidden-1c9e", "pol-hidden-77ad"];
    let app = router(
        Arc::new(SessionService::open(dir.path()).unwrap()),
        ReportOptions { n_samples: 2000, ..ReportOptions::default() },
        None,
    );
    let call = |method: Method, uri: String, body: Option<serde_json::Value>| {
        let app = app.clone();
        async move {
            let body = body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty);
            let req = Request::builder().method(method).uri(uri).body(body).unwrap();
            let res = app.oneshot(req).await.unwrap();
            String::from_utf8(res.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap()
        }
    };
    let created = call(
        Method::POST,
        "/sessions".into(),
        Some(json!({ "task": fixtures::energy_bar_task(), "policies": policies, "repetitions": 2, "seed": 3 })),
    )
    .await;
    let id = serde_json::from_str::<serde_json::Value>(&created).unwrap()["session_id"]
        .as_str()
        .ok_or(created.clone())?
        .to_owned();
    let mut rng = StdRng::seed_from_u64(8);
    for round in 0..rounds {
        let n = rng.random_range(0..41);
        let answers = json!({ "success": rng.random::<bool>(), "picked_up": true, "collided": false });
        let (method, uri, body) = match rng.random_range(0..8) {
            0 => (Method::GET, format!("/sessions/{id}"), None),
            1 | 2 => (Method::GET, format!("/sessions/{id}/next"), None),
            3 | 4 => (
                Method::POST,
                format!("/sessions/{id}/rollouts/{n}/rubric"),
                Some(json!({ "answers": answers, "amend": rng.random_bool(0.2) })),
            ),
            5 => (Method::GET, format!("/sessions/{id}/report?format=json"), None),
            6 => (Method::GET, format!("/sessions/{id}/summary"), None),
            _ => (Method::POST, format!("/sessions/{id}/finalize"), None),
        };
        let body = call(method, uri.clone(), body).await;
        for p in policies {
            ensure!(!body.contains(p), "request {round} {uri} leaked {p}");
        }
    }
    Ok(rounds)
}

fn scheduler_and_blindness() -> Verdict {
    let policies = vec!["A".to_owned(), "B".to_owned()];
    let ics: Vec<u32> = (0..10).collect();
    let plan = create_plan(&policies, &ics, 2, 17).unwrap();
    ensure!(plan.len() == 40, "{} entries", plan.len());
    for p in &policies {
        for ic in &ics {
            let k = plan.entries.iter().filter(|e| &e.policy_id == p && e.ic_id == *ic).count();
            ensure!(k == 2, "policy {p} on IC {ic}: {k} runs");
        }
    }
    ensure!(create_plan(&policies, &ics, 2, 17).unwrap() == plan, "same seed gave a different plan");
    ensure!(create_plan(&policies, &ics, 2, 18).unwrap() != plan, "seed has no effect");

    let mut projections = 0;
    for seed in 0..500 {
        let (log, secret) = random_log(seed);
        // Every blinded prefix of the log, not just its final state.
        for k in 1..=log.len() {
            let state = replay_events(&log.events()[..k]).unwrap();
            if !state.is_blinded() {
                break;
            }
            ensure!(state.plan().is_none() && state.records().is_none(), "log {seed} exposes the plan");
            let view = serde_json::to_string(&state.blinded_view()).unwrap();
            for p in &secret {
                ensure!(!view.contains(p.as_str()), "log {seed} prefix {k} leaked {p}");
            }
            projections += 1;
        }
    }
    let rt = tokio::runtime::Runtime::new().unwrap();
    let requests = rt.block_on(fuzz_http(400))?;
    Ok(format!(
        "40 balanced entries, seed-stable; {projections} blinded log projections and {requests} HTTP responses clean"
    ))
}

fn store_replay() -> Verdict {
    let mut rng = StdRng::seed_from_u64(5);
    let (mut truncations, mut corruptions) = (0, 0);
    for seed in 0..500 {
        let (log, _) = random_log(seed);
        let text = log.to_text();
        let bytes = text.as_bytes();
        let a = replay(bytes).map_err(|e| format!("log {seed}: {e}"))?;
        ensure!(Some(&a) == log.state(), "log {seed}: replay differs from live state");
        ensure!(replay(bytes).unwrap() == a, "log {seed}: replay not deterministic");
        ensure!(replay_events(log.events()).unwrap() == a, "log {seed}: event replay differs");

        let line_of = |pos: usize| bytes[..pos].iter().filter(|&&b| b == b'\n').count() + 1;
        // Every cut inside a line for the first logs, a sample for the rest.
        let cuts: Vec<usize> = if seed < 10 {
            (0..bytes.len()).collect()
        } else {
            (0..20).map(|_| rng.random_range(0..bytes.len())).collect()
        };
        for cut in cuts {
            if cut == 0 || bytes[cut - 1] == b'\n' {
                continue;
            }
            match replay(&bytes[..cut]) {
                Err(StoreError::Truncated { line }) if line == line_of(cut) => truncations += 1,
                other => return Err(format!("log {seed} cut at {cut}: {other:?}")),
            }
        }
        let positions: Vec<usize> = if seed < 10 {
            (0..bytes.len()).collect()
        } else {
            (0..20).map(|_| rng.random_range(0..bytes.len())).collect()
        };
        for pos in positions {
            let mut bad = bytes.to_vec();
            bad[pos] ^= rng.random_range(1..=255u8);
            match replay(&bad) {
                Err(e) if e.line() == Some(line_of(pos)) => corruptions += 1,
                other => return Err(format!("log {seed} byte {pos}: {other:?}")),
            }
        }
    }
    Ok(format!(
        "500 logs replay identically; {truncations} truncations and {corruptions} corruptions detected at the right line"
    ))
}

fn report_golden() -> Verdict {
    let state = replay_events(&fixtures::energy_bar_events()).unwrap();
    let metrics = fixtures::energy_bar_metrics();
    let render_once = || render(&build_report(&state, &metrics, &ReportOptions::default()).unwrap(), Format::Markdown);
    let first = render_once();
    ensure!(render_once() == first, "two renders differ");
    ensure!(first == GOLDEN, "render differs from the golden file");
    let rate = regex::Regex::new(r"\(\d\.\d\d\)").unwrap();
    let with_counts = regex::Regex::new(r"\d+/\d+ \(\d\.\d\d\)").unwrap();
    let (rates, counted) = (rate.find_iter(&first).count(), with_counts.find_iter(&first).count());
    ensure!(rates > 0 && rates == counted, "{counted} of {rates} rates show counts");
    let line = "All policies failed every run on: IC 6.";
    ensure!(first.contains(line), "missing `{line}`");
    ensure!(first.contains("IC 6 (2/2)"), "per-IC failures missing IC 6 (2/2)");
    Ok(format!("byte-identical, {rates} rates with counts, IC 6 listed"))
}

fn cli(bin: &str, dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin).args(args).current_dir(dir).output().map_err(|e| format!("spawn {args:?}: {e}"))?;
    ensure!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    Ok(String::from_utf8(out.stdout).unwrap())
}

/// Everything except the runs-per-day table, which depends on the clock.
fn without_days(report: &str) -> String {
    let start = report.find("Runs per day:").unwrap_or(0);
    let end = report.find("Initial conditions:").unwrap_or(start);
    format!("{}{}", &report[..start], &report[end..])
}

fn end_to_end_cli() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_rollout-eval");
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("task.json"), serde_json::to_string_pretty(&fixtures::energy_bar_task()).unwrap()).unwrap();
    let plan = fixtures::energy_bar_plan();
    for e in &plan.entries {
        let mut reps =
            plan.entries[..e.rollout_index].iter().filter(|o| o.policy_id == e.policy_id && o.ic_id == e.ic_id);
        let rep = reps.by_ref().count() as u32;
        let trace = fixtures::energy_bar_trace(&e.policy_id, e.ic_id, rep);
        trace.write_csv(std::fs::File::create(dir.join(format!("run{}.csv", e.rollout_index))).unwrap()).unwrap();
    }

    let start = Instant::now();
    cli(bin, dir, &["task", "validate", "task.json"])?;
    let id = cli(
        bin,
        dir,
        &[
            "session",
            "plan",
            "--task",
            "task.json",
            "--policies",
            "A,B",
            "--reps",
            "2",
            "--seed",
            "2024",
            "--id",
            fixtures::SESSION_ID,
        ],
    )?;
    ensure!(id.trim() == fixtures::SESSION_ID, "plan printed `{id}`");
    let mut seen: BTreeMap<(String, u32), u32> = BTreeMap::new();
    for e in &plan.entries {
        let next: serde_json::Value =
            serde_json::from_str(&cli(bin, dir, &["session", "next", fixtures::SESSION_ID])?).unwrap();
        ensure!(next["rollout_index"] == e.rollout_index, "next gave {next}");
        ensure!(next.get("policy_id").is_none(), "assignment shows a policy");
        let rep = seen.entry((e.policy_id.clone(), e.ic_id)).or_insert(0);
        let (success, picked_up, note) = fixtures::outcome(&e.policy_id, e.ic_id, *rep);
        let skip_trace = e.policy_id == "A" && e.ic_id == 8 && *rep == 0;
        *rep += 1;
        let index = e.rollout_index.to_string();
        let yn = |b: bool| if b { "yes" } else { "no" };
        let (s, p) = (format!("success={}", yn(success)), format!("picked_up={}", yn(picked_up)));
        cli(
            bin,
            dir,
            &[
                "session",
                "submit",
                fixtures::SESSION_ID,
                &index,
                "--answer",
                &s,
                "--answer",
                &p,
                "--answer",
                "collided=no",
                "--note",
                note,
            ],
        )?;
        if !skip_trace {
            let trace = format!("run{index}.csv");
            cli(bin, dir, &["session", "attach", fixtures::SESSION_ID, &index, &trace])?;
        }
    }
    let done = cli(bin, dir, &["session", "next", fixtures::SESSION_ID])?;
    ensure!(done.contains("\"complete\""), "expected completion, got {done}");
    cli(bin, dir, &["session", "finalize", fixtures::SESSION_ID])?;
    let log = format!("sessions/{}.jsonl", fixtures::SESSION_ID);
    let report = cli(bin, dir, &["report", "build", &log])?;
    let elapsed = start.elapsed().as_secs_f64();

    ensure!(elapsed < 10.0, "took {elapsed:.2} s");
    ensure!(without_days(&report) == without_days(GOLDEN), "CLI report differs from the golden report:\n{report}");
    Ok(format!("plan, 40 scripted rollouts, finalize and report build in {elapsed:.2} s; report matches golden"))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("Bayesian point value", bayes_point_value),
        ("Sample-size sensitivity", sample_size_sensitivity),
        ("Symmetry", symmetry),
        ("STL mode reproduction", stl_modes),
        ("STL oracle equivalence", stl_oracle),
        ("SPARC", sparc_criterion),
        ("Scheduler and blindness", scheduler_and_blindness),
        ("Store replay", store_replay),
        ("Report golden", report_golden),
        ("End-to-end CLI", end_to_end_cli),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let verdict = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
