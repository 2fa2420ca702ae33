use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{compare, BetaPosterior, ComparisonResult, Counts, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcComparison {
    pub ic: u32,
    pub before: Counts,
    pub after: Counts,
    pub result: ComparisonResult,
}

/// Before/after comparison on matched initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub shared_ics: Vec<u32>,
    pub pooled_before: Counts,
    pub pooled_after: Counts,
    /// `prob_second_better` is the probability that `after` outperforms `before`.
    pub pooled: ComparisonResult,
    pub per_ic: Vec<IcComparison>,
}

/// Compares a later evaluation against an earlier one on the ICs they share.
///
/// Every IC in `after` must also appear in `before`. The pooled comparison
/// uses only those ICs; per-IC comparisons are made where both sides have at
/// least one trial.
pub fn shift_report(
    before: &BTreeMap<u32, Counts>,
    after: &BTreeMap<u32, Counts>,
    prior: BetaPosterior,
    level: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ShiftReport, StatsError> {
    let unknown: Vec<u32> = after.keys().filter(|k| !before.contains_key(k)).copied().collect();
    if !unknown.is_empty() {
        return Err(StatsError::UnknownIcs(unknown));
    }
    let shared: Vec<u32> = after.keys().copied().collect();
    if shared.is_empty() {
        return Err(StatsError::NoSharedIcs);
    }
    let pooled_before = shared.iter().map(|ic| before[ic]).fold(Counts::default(), |a, b| a + b);
    let pooled_after = shared.iter().map(|ic| after[ic]).fold(Counts::default(), |a, b| a + b);
    let pooled = compare(pooled_before, pooled_after, prior, level, n_samples, seed)?;
    let mut per_ic = Vec::new();
    for ic in &shared {
        let (b, a) = (before[ic], after[ic]);
        if b.trials() > 0 && a.trials() > 0 {
            per_ic.push(IcComparison {
                ic: *ic,
                before: b,
                after: a,
                result: compare(b, a, prior, level, n_samples, seed)?,
            });
        }
    }
    Ok(ShiftReport { shared_ics: shared, pooled_before, pooled_after, pooled, per_ic })
}
