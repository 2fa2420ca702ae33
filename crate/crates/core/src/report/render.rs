use std::fmt::Write;
use std::str::FromStr;

use super::{EvaluationReport, ReportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Json,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Format::Markdown),
            "json" => Ok(Format::Json),
            other => Err(ReportError::UnknownFormat(other.to_owned())),
        }
    }
}

pub fn render(report: &EvaluationReport, format: Format) -> String {
    match format {
        Format::Markdown => markdown(report),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

/// `s/n (r)` with `r` rounded half away from zero to two decimals.
pub fn format_rate(s: u64, n: u64) -> String {
    if n == 0 {
        return format!("{s}/0 (-)");
    }
    let hundredths = (200 * s as u128 + n as u128) / (2 * n as u128);
    format!("{s}/{n} ({}.{:02})", hundredths / 100, hundredths % 100)
}

fn f3(x: f64) -> String {
    format!("{x:.3}")
}

fn opt3(x: Option<f64>) -> String {
    x.map(f3).unwrap_or_else(|| "not computed".into())
}

fn cell(text: &str) -> String {
    text.replace(['\r', '\n'], " ").replace('|', "\\|")
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

fn markdown(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Evaluation report: {}\n", r.task_name);
    let _ = writeln!(out, "Session `{}`.\n", r.session_id);
    for w in &r.warnings {
        let _ = writeln!(out, "> **Warning:** {w}\n");
    }
    let policies = &r.results.policies;
    let pct = (r.results.level * 100.0).round();

    let ep = &r.experiment_parameters;
    out.push_str("## Experiment parameters\n\n");
    let _ = writeln!(out, "**Success criteria:** {}\n", ep.success_criteria);
    let _ = writeln!(out, "{}\n", ep.design);
    table(
        &mut out,
        &["Policy", "Planned", "Completed", "Interrupted", "Not run", "Counted"],
        &ep.counts
            .iter()
            .map(|c| {
                vec![
                    cell(&c.policy),
                    c.planned.to_string(),
                    c.completed.to_string(),
                    c.aborted.to_string(),
                    c.not_run.to_string(),
                    c.counted.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );
    if !ep.days.is_empty() {
        out.push_str("Runs per day:\n\n");
        let mut header = vec!["Date"];
        header.extend(policies.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = ep
            .days
            .iter()
            .map(|d| std::iter::once(d.date.clone()).chain(d.runs.iter().map(u64::to_string)).collect())
            .collect();
        table(&mut out, &header, &rows);
    }
    out.push_str("Initial conditions:\n\n");
    table(
        &mut out,
        &["IC", "Description", "Distribution", "Reference image"],
        &ep.initial_conditions
            .iter()
            .map(|ic| {
                vec![
                    ic.id.to_string(),
                    cell(&ic.description),
                    if ic.in_distribution { "in distribution".into() } else { "out of distribution".into() },
                    ic.reference_image.as_deref().map(cell).unwrap_or_else(|| "-".into()),
                ]
            })
            .collect::<Vec<_>>(),
    );

    let res = &r.results;
    out.push_str("## Results\n\n");
    out.push_str("**Success rate:**\n\n");
    for s in &res.success {
        let _ = write!(out, "- {}: {}", s.policy, format_rate(s.successes, s.trials));
        if let Some((lo, hi)) = s.exact_interval {
            let _ = write!(out, ", {pct}% exact interval [{}, {}]", f3(lo), f3(hi));
        }
        out.push('\n');
    }
    out.push('\n');

    out.push_str("**Rubric:**\n\n");
    let mut header = vec!["Question"];
    header.extend(policies.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = res
        .rubric
        .rows
        .iter()
        .map(|row| {
            std::iter::once(cell(&row.text))
                .chain(row.counts.iter().map(|c| format_rate(c.yes as u64, c.total() as u64)))
                .collect()
        })
        .collect();
    table(&mut out, &header, &rows);

    let prior = format!("Beta({}, {})", res.prior.alpha, res.prior.beta);
    if res.posteriors.len() == 1 {
        let p = &res.posteriors[0];
        let _ = writeln!(
            out,
            "**Single-policy summary:** {}: posterior Beta({}, {}) under a {prior} prior, mean {}, \
             {pct}% credible interval [{}, {}]. No comparison is possible with one policy.\n",
            p.policy,
            p.posterior.alpha,
            p.posterior.beta,
            f3(p.mean),
            f3(p.credible_interval.0),
            f3(p.credible_interval.1)
        );
    } else if !res.posteriors.is_empty() {
        let _ = writeln!(out, "**Posteriors** (prior {prior}):\n");
        table(
            &mut out,
            &["Policy", "Posterior", "Mean", &format!("{pct}% credible interval")],
            &res.posteriors
                .iter()
                .map(|p| {
                    vec![
                        cell(&p.policy),
                        format!("Beta({}, {})", p.posterior.alpha, p.posterior.beta),
                        f3(p.mean),
                        format!("[{}, {}]", f3(p.credible_interval.0), f3(p.credible_interval.1)),
                    ]
                })
                .collect::<Vec<_>>(),
        );
        out.push_str("**Comparisons:**\n\n");
        for c in &res.comparisons {
            let cr = &c.result;
            let _ = writeln!(
                out,
                "- {b} vs {a}: P({b} > {a}) = {}. {pct}% credible interval of p({b}) - p({a}): [{}, {}], {} 0 ({} samples, seed {}).",
                f3(cr.prob_second_better),
                f3(cr.diff_interval.0),
                f3(cr.diff_interval.1),
                if cr.excludes_zero { "excludes" } else { "includes" },
                cr.n_samples,
                cr.seed,
                a = c.first,
                b = c.second,
            );
        }
        out.push('\n');
    }

    out.push_str("**Rollouts:**\n\n");
    table(
        &mut out,
        &["Rollout", "Policy", "IC", "Outcome", "Note"],
        &res.rollouts
            .iter()
            .map(|row| {
                let outcome = match (row.aborted, row.success) {
                    (true, _) => "interrupted (failure)",
                    (false, true) => "success",
                    (false, false) => "failure",
                };
                vec![
                    row.label.clone(),
                    cell(&row.policy),
                    row.ic_id.to_string(),
                    outcome.into(),
                    cell(&row.failure_note),
                ]
            })
            .collect::<Vec<_>>(),
    );

    let perf = &r.performance;
    out.push_str("## Performance\n\n");
    out.push_str(
        "SPARC (closer to 0 is smoother), velocity peak count and STL robustness for every completed rollout.\n\n",
    );
    if !perf.stl_specs.is_empty() {
        out.push_str("STL specifications:\n\n");
        for s in &perf.stl_specs {
            let _ = writeln!(out, "- {}: `{}`", s.name, s.formula);
        }
        out.push('\n');
    }
    let mut header = vec!["Rollout", "Policy", "IC", "Success", "SPARC", "Peaks"];
    header.extend(perf.stl_specs.iter().map(|s| s.name.as_str()));
    let rows: Vec<Vec<String>> = perf
        .rows
        .iter()
        .map(|row| {
            let mut v = vec![
                row.label.clone(),
                cell(&row.policy),
                row.ic_id.to_string(),
                if row.success { "yes" } else { "no" }.into(),
                opt3(row.sparc),
                row.peaks.map(|p| p.to_string()).unwrap_or_else(|| "not computed".into()),
            ];
            v.extend(row.robustness.iter().map(|x| opt3(*x)));
            v
        })
        .collect();
    table(&mut out, &header, &rows);

    let fa = &r.failure_analysis;
    out.push_str("## Failure analysis\n\n");
    if fa.all_failed_ics.is_empty() {
        out.push_str("No initial condition failed on every run of every policy.\n\n");
    } else {
        let ics: Vec<String> = fa.all_failed_ics.iter().map(|i| format!("IC {i}")).collect();
        let _ = writeln!(out, "All policies failed every run on: {}.\n", ics.join(", "));
    }
    table(
        &mut out,
        &["Policy", "Failures", "Failed ICs (failed/runs)"],
        &fa.policies
            .iter()
            .map(|p| {
                let ics: Vec<String> =
                    p.per_ic.iter().map(|i| format!("IC {} ({}/{})", i.ic_id, i.failed, i.runs)).collect();
                vec![
                    cell(&p.policy),
                    format_rate(p.failures, p.trials),
                    if ics.is_empty() { "-".into() } else { ics.join(", ") },
                ]
            })
            .collect::<Vec<_>>(),
    );
    if let Some(first) = fa.policies.iter().find(|p| !p.categories.is_empty()) {
        out.push_str("Failure categories:\n\n");
        let mut header = vec!["Policy"];
        header.extend(first.categories.iter().map(|c| c.category.as_str()));
        let rows: Vec<Vec<String>> = fa
            .policies
            .iter()
            .map(|p| {
                std::iter::once(cell(&p.policy))
                    .chain(p.categories.iter().map(|c| format_rate(c.count, p.failures)))
                    .collect()
            })
            .collect();
        table(&mut out, &header, &rows);
    }
    if fa.policies.iter().any(|p| !p.notes.is_empty()) {
        out.push_str("Failure notes:\n\n");
        for p in &fa.policies {
            for n in &p.notes {
                let _ = writeln!(
                    out,
                    "- {}, {} (IC {}): {}",
                    p.policy,
                    n.label,
                    n.ic_id,
                    n.note.replace(['\r', '\n'], " ")
                );
            }
        }
        out.push('\n');
    }
    while out.ends_with("\n\n") {
        out.pop();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_round_half_away_from_zero() {
        assert_eq!(format_rate(13, 20), "13/20 (0.65)");
        assert_eq!(format_rate(14, 20), "14/20 (0.70)");
        assert_eq!(format_rate(1, 8), "1/8 (0.13)"); // 0.125
        assert_eq!(format_rate(1, 3), "1/3 (0.33)");
        assert_eq!(format_rate(2, 3), "2/3 (0.67)");
        assert_eq!(format_rate(20, 20), "20/20 (1.00)");
        assert_eq!(format_rate(0, 0), "0/0 (-)");
    }

    #[test]
    fn unknown_format() {
        assert_eq!("pdf".parse::<Format>(), Err(ReportError::UnknownFormat("pdf".into())));
        assert_eq!("md".parse::<Format>(), Ok(Format::Markdown));
    }
}
