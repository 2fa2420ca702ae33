//! Evaluation reports built from an unblinded session.
//!
//! A report has four parts, rendered in this order: experiment parameters,
//! results, performance and failure analysis. Rates are always shown next to
//! the counts they come from, and every Monte Carlo comparison carries its
//! sample count and seed.

mod render;
mod rollout_metrics;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use render::{format_rate, render, Format};
pub use rollout_metrics::{compute_rollout_metrics, RolloutMetrics};

use crate::model::{aggregate_rubric, RubricError, RubricTable, StlSpec};
use crate::stats::{clopper_pearson, compare, posterior, BetaPosterior, ComparisonResult, Counts, StatsError};
use crate::store::{RolloutStatus, SessionState};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("session is still blinded")]
    Blinded,
    #[error("task has no overall-success question")]
    NoOverallQuestion,
    #[error("unknown format `{0}` (expected markdown or json)")]
    UnknownFormat(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Rubric(#[from] RubricError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub prior: BetaPosterior,
    pub level: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Count started-but-unscored rollouts as failures.
    pub include_aborted: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { prior: BetaPosterior::uniform(), level: 0.95, n_samples: 20_000, seed: 0, include_aborted: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCount {
    pub policy: String,
    pub planned: u64,
    pub completed: u64,
    pub aborted: u64,
    pub not_run: u64,
    /// Rollouts that enter success rates and posteriors.
    pub counted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayCount {
    pub date: String,
    /// Parallel to the report's policy list.
    pub runs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcSummary {
    pub id: u32,
    pub description: String,
    pub in_distribution: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParameters {
    pub success_criteria: String,
    pub design: String,
    pub seed: u64,
    pub repetitions: u32,
    pub counts: Vec<ConditionCount>,
    pub days: Vec<DayCount>,
    pub initial_conditions: Vec<IcSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub policy: String,
    pub successes: u64,
    pub trials: u64,
    /// Clopper-Pearson interval at the report level; absent with no trials.
    pub exact_interval: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub policy: String,
    pub posterior: BetaPosterior,
    pub mean: f64,
    pub credible_interval: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedComparison {
    pub first: String,
    pub second: String,
    pub result: ComparisonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRow {
    pub rollout_index: usize,
    pub label: String,
    pub policy: String,
    pub ic_id: u32,
    pub success: bool,
    pub aborted: bool,
    #[serde(default)]
    pub failure_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub policies: Vec<String>,
    pub prior: BetaPosterior,
    pub level: f64,
    pub success: Vec<SuccessRate>,
    pub rubric: RubricTable,
    pub posteriors: Vec<PosteriorSummary>,
    /// Every pair of policies; empty with fewer than two.
    pub comparisons: Vec<NamedComparison>,
    pub rollouts: Vec<RolloutRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub rollout_index: usize,
    pub label: String,
    pub policy: String,
    pub ic_id: u32,
    pub success: bool,
    pub sparc: Option<f64>,
    pub peaks: Option<usize>,
    /// Parallel to [`Performance::stl_specs`].
    pub robustness: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub stl_specs: Vec<StlSpec>,
    pub rows: Vec<PerformanceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcFailures {
    pub ic_id: u32,
    pub failed: u64,
    pub runs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    pub rollout_index: usize,
    pub label: String,
    pub ic_id: u32,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFailures {
    pub policy: String,
    pub failures: u64,
    pub trials: u64,
    /// ICs with at least one failure, ascending.
    pub per_ic: Vec<IcFailures>,
    pub categories: Vec<CategoryCount>,
    pub notes: Vec<FailureNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureAnalysis {
    /// ICs on which every policy failed every counted run.
    pub all_failed_ics: Vec<u32>,
    pub policies: Vec<PolicyFailures>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task_name: String,
    pub session_id: String,
    pub warnings: Vec<String>,
    pub experiment_parameters: ExperimentParameters,
    pub results: Results,
    pub performance: Performance,
    pub failure_analysis: FailureAnalysis,
}

pub const UNCATEGORIZED: &str = "uncategorized";

/// Category of a failure note: the configured category it is prefixed with
/// (`"grasp: dropped the bar"`), otherwise [`UNCATEGORIZED`].
pub fn categorize<'a>(note: &str, categories: &'a [String]) -> &'a str {
    let head = note.split_once(':').map(|(h, _)| h.trim());
    categories.iter().find(|c| Some(c.as_str()) == head).map(String::as_str).unwrap_or(UNCATEGORIZED)
}

struct Counted {
    index: usize,
    label: String,
    policy: String,
    ic_id: u32,
    success: bool,
    aborted: bool,
    note: String,
    date: Option<String>,
}

pub fn build_report(
    state: &SessionState,
    metrics: &BTreeMap<usize, RolloutMetrics>,
    options: &ReportOptions,
) -> Result<EvaluationReport, ReportError> {
    let (Some(plan), Some(records)) = (state.plan(), state.records()) else {
        return Err(ReportError::Blinded);
    };
    let task = state.task();
    let overall = task.overall_question().ok_or(ReportError::NoOverallQuestion)?;
    let rubric = aggregate_rubric(&task.rubric, &plan.policies, &records)?;
    let policies = rubric.policies.clone();

    let mut counted: Vec<Counted> = records
        .iter()
        .map(|r| Counted {
            index: r.rollout_index,
            label: plan.entries[r.rollout_index].blinded_label.clone(),
            policy: r.policy_id.clone(),
            ic_id: r.ic_id,
            success: r.rubric_responses[&overall.id],
            aborted: false,
            note: r.failure_note.clone(),
            date: Some(r.timestamp.date_naive().to_string()),
        })
        .collect();
    let aborted = state.indices_with(RolloutStatus::Incomplete);
    let not_run = state.indices_with(RolloutStatus::Pending);
    if options.include_aborted {
        for &i in &aborted {
            let e = &plan.entries[i];
            counted.push(Counted {
                index: i,
                label: e.blinded_label.clone(),
                policy: e.policy_id.clone(),
                ic_id: e.ic_id,
                success: false,
                aborted: true,
                note: String::new(),
                date: state.rollout_state(i).and_then(|r| r.started_at).map(|t| t.date_naive().to_string()),
            });
        }
        counted.sort_by_key(|c| c.index);
    }

    let mut warnings = Vec::new();
    if records.is_empty() {
        warnings.push("no completed rollouts; results are empty".to_owned());
    }
    if !not_run.is_empty() {
        warnings.push(format!(
            "session closed early: {} of {} planned rollouts never ran ({})",
            not_run.len(),
            plan.len(),
            labels(plan, &not_run)
        ));
    }
    if !aborted.is_empty() {
        let how = if options.include_aborted { "counted as failures" } else { "excluded from aggregation" };
        warnings.push(format!("{} interrupted rollouts {how} ({})", aborted.len(), labels(plan, &aborted)));
    }

    let count_for = |p: &str, set: &[usize]| set.iter().filter(|&&i| plan.entries[i].policy_id == p).count() as u64;
    let counts: Vec<ConditionCount> = policies
        .iter()
        .map(|p| ConditionCount {
            policy: p.clone(),
            planned: plan.entries.iter().filter(|e| &e.policy_id == p).count() as u64,
            completed: records.iter().filter(|r| &r.policy_id == p).count() as u64,
            aborted: count_for(p, &aborted),
            not_run: count_for(p, &not_run),
            counted: counted.iter().filter(|c| &c.policy == p).count() as u64,
        })
        .collect();

    let mut days: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for c in &counted {
        if let Some(d) = &c.date {
            let col = policies.iter().position(|p| p == &c.policy).expect("policy column");
            days.entry(d.clone()).or_insert_with(|| vec![0; policies.len()])[col] += 1;
        }
    }

    let design = if policies.len() > 1 {
        format!(
            "{} policies were evaluated in interleaved A/B order, blind to the evaluator, \
             {} times on each of {} initial conditions ({} planned evaluations per policy). \
             Plan seed {}.",
            policies.len(),
            plan.repetitions,
            plan.ics.len(),
            plan.repetitions as usize * plan.ics.len(),
            plan.seed
        )
    } else {
        format!(
            "One policy was evaluated blind to the evaluator, {} times on each of {} initial \
             conditions ({} planned evaluations). Plan seed {}.",
            plan.repetitions,
            plan.ics.len(),
            plan.repetitions as usize * plan.ics.len(),
            plan.seed
        )
    };

    let experiment_parameters = ExperimentParameters {
        success_criteria: task.success_criteria.clone(),
        design,
        seed: plan.seed,
        repetitions: plan.repetitions,
        counts,
        days: days.into_iter().map(|(date, runs)| DayCount { date, runs }).collect(),
        initial_conditions: plan
            .ics
            .iter()
            .filter_map(|id| task.initial_condition(*id))
            .map(|ic| IcSummary {
                id: ic.id,
                description: ic.description.clone(),
                in_distribution: ic.in_distribution,
                reference_image: ic.reference_image.clone(),
            })
            .collect(),
    };

    let tallies: Vec<Counts> = policies
        .iter()
        .map(|p| {
            let s = counted.iter().filter(|c| &c.policy == p && c.success).count() as u64;
            let f = counted.iter().filter(|c| &c.policy == p && !c.success).count() as u64;
            Counts::new(s, f)
        })
        .collect();
    let success = policies
        .iter()
        .zip(&tallies)
        .map(|(p, t)| {
            Ok(SuccessRate {
                policy: p.clone(),
                successes: t.successes,
                trials: t.trials(),
                exact_interval: if t.trials() > 0 {
                    Some(clopper_pearson(t.successes, t.failures, options.level)?)
                } else {
                    None
                },
            })
        })
        .collect::<Result<Vec<_>, StatsError>>()?;
    let posteriors = policies
        .iter()
        .zip(&tallies)
        .map(|(p, t)| {
            let post = posterior(options.prior, t.successes, t.failures)?;
            Ok(PosteriorSummary {
                policy: p.clone(),
                posterior: post,
                mean: post.mean(),
                credible_interval: post.credible_interval(options.level)?,
            })
        })
        .collect::<Result<Vec<_>, StatsError>>()?;
    let mut comparisons = Vec::new();
    for i in 0..policies.len() {
        for j in i + 1..policies.len() {
            comparisons.push(NamedComparison {
                first: policies[i].clone(),
                second: policies[j].clone(),
                result: compare(tallies[i], tallies[j], options.prior, options.level, options.n_samples, options.seed)?,
            });
        }
    }

    let results = Results {
        policies: policies.clone(),
        prior: options.prior,
        level: options.level,
        success,
        rubric,
        posteriors,
        comparisons,
        rollouts: counted
            .iter()
            .map(|c| RolloutRow {
                rollout_index: c.index,
                label: c.label.clone(),
                policy: c.policy.clone(),
                ic_id: c.ic_id,
                success: c.success,
                aborted: c.aborted,
                failure_note: c.note.clone(),
            })
            .collect(),
    };

    let finite = |x: f64| x.is_finite().then_some(x);
    let performance = Performance {
        stl_specs: task.stl_specs.clone(),
        rows: records
            .iter()
            .map(|r| {
                let m = metrics.get(&r.rollout_index);
                PerformanceRow {
                    rollout_index: r.rollout_index,
                    label: plan.entries[r.rollout_index].blinded_label.clone(),
                    policy: r.policy_id.clone(),
                    ic_id: r.ic_id,
                    success: r.rubric_responses[&overall.id],
                    sparc: m.and_then(|m| m.sparc).and_then(finite),
                    peaks: m.and_then(|m| m.peaks),
                    robustness: task
                        .stl_specs
                        .iter()
                        .map(|s| m.and_then(|m| m.robustness.get(&s.name).copied()).and_then(finite))
                        .collect(),
                }
            })
            .collect(),
    };

    let mut per_policy = Vec::new();
    for p in &policies {
        let mine: Vec<&Counted> = counted.iter().filter(|c| &c.policy == p).collect();
        let mut by_ic: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
        for c in &mine {
            let e = by_ic.entry(c.ic_id).or_default();
            e.1 += 1;
            if !c.success {
                e.0 += 1;
            }
        }
        let failed: Vec<&&Counted> = mine.iter().filter(|c| !c.success).collect();
        let categories = if task.failure_categories.is_empty() {
            Vec::new()
        } else {
            let mut tally: Vec<CategoryCount> = task
                .failure_categories
                .iter()
                .chain(std::iter::once(&UNCATEGORIZED.to_owned()))
                .map(|c| CategoryCount { category: c.clone(), count: 0 })
                .collect();
            for c in &failed {
                let cat = categorize(&c.note, &task.failure_categories);
                tally.iter_mut().find(|t| t.category == cat).expect("listed").count += 1;
            }
            tally
        };
        per_policy.push(PolicyFailures {
            policy: p.clone(),
            failures: failed.len() as u64,
            trials: mine.len() as u64,
            per_ic: by_ic
                .into_iter()
                .filter(|(_, (f, _))| *f > 0)
                .map(|(ic_id, (failed, runs))| IcFailures { ic_id, failed, runs })
                .collect(),
            categories,
            notes: failed
                .iter()
                .filter(|c| !c.note.trim().is_empty())
                .map(|c| FailureNote {
                    rollout_index: c.index,
                    label: c.label.clone(),
                    ic_id: c.ic_id,
                    note: c.note.clone(),
                })
                .collect(),
        });
    }
    let ic_ids: BTreeSet<u32> = counted.iter().map(|c| c.ic_id).collect();
    let all_failed_ics = if policies.is_empty() {
        Vec::new()
    } else {
        ic_ids
            .into_iter()
            .filter(|ic| {
                policies.iter().all(|p| {
                    let runs: Vec<&Counted> = counted.iter().filter(|c| &c.policy == p && c.ic_id == *ic).collect();
                    !runs.is_empty() && runs.iter().all(|c| !c.success)
                })
            })
            .collect()
    };

    Ok(EvaluationReport {
        task_name: task.name.clone(),
        session_id: state.session_id().to_owned(),
        warnings,
        experiment_parameters,
        results,
        performance,
        failure_analysis: FailureAnalysis { all_failed_ics, policies: per_policy },
    })
}

fn labels(plan: &crate::store::AssignmentPlan, indices: &[usize]) -> String {
    indices.iter().map(|&i| plan.entries[i].blinded_label.as_str()).collect::<Vec<_>>().join(", ")
}
