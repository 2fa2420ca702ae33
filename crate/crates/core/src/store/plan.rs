use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("at least one policy is required")]
    NoPolicies,
    #[error("at least one initial condition is required")]
    NoInitialConditions,
    #[error("repetitions must be at least 1")]
    ZeroRepetitions,
    #[error("duplicate policy id `{0}`")]
    DuplicatePolicy(String),
    #[error("duplicate initial condition {0}")]
    DuplicateInitialCondition(u32),
    #[error("policy id must be non-empty")]
    EmptyPolicyId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub rollout_index: usize,
    pub blinded_label: String,
    pub policy_id: String,
    pub ic_id: u32,
}

/// Seeded, interleaved schedule of rollouts for a blind A/B evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub entries: Vec<PlanEntry>,
    pub seed: u64,
    pub policies: Vec<String>,
    pub ics: Vec<u32>,
    pub repetitions: u32,
}

pub fn blinded_label(rollout_index: usize) -> String {
    format!("R-{rollout_index}")
}

/// Builds the schedule.
///
/// Each (initial condition, repetition) block runs every policy once, in a
/// shuffled order, and the blocks themselves are shuffled. Every policy/IC
/// pair therefore appears exactly `repetitions` times and policies stay
/// interleaved throughout the session.
pub fn create_plan(policies: &[String], ics: &[u32], repetitions: u32, seed: u64) -> Result<AssignmentPlan, PlanError> {
    if policies.is_empty() {
        return Err(PlanError::NoPolicies);
    }
    if ics.is_empty() {
        return Err(PlanError::NoInitialConditions);
    }
    if repetitions == 0 {
        return Err(PlanError::ZeroRepetitions);
    }
    let mut seen = BTreeSet::new();
    for p in policies {
        if p.is_empty() {
            return Err(PlanError::EmptyPolicyId);
        }
        if !seen.insert(p) {
            return Err(PlanError::DuplicatePolicy(p.clone()));
        }
    }
    let mut seen_ic = BTreeSet::new();
    for ic in ics {
        if !seen_ic.insert(ic) {
            return Err(PlanError::DuplicateInitialCondition(*ic));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: Vec<(u32, u32)> = ics.iter().flat_map(|&ic| (0..repetitions).map(move |rep| (ic, rep))).collect();
    blocks.shuffle(&mut rng);
    let mut entries = Vec::with_capacity(blocks.len() * policies.len());
    for (ic, _) in blocks {
        let mut order: Vec<&String> = policies.iter().collect();
        order.shuffle(&mut rng);
        for policy in order {
            let rollout_index = entries.len();
            entries.push(PlanEntry {
                rollout_index,
                blinded_label: blinded_label(rollout_index),
                policy_id: policy.clone(),
                ic_id: ic,
            });
        }
    }
    Ok(AssignmentPlan { entries, seed, policies: policies.to_vec(), ics: ics.to_vec(), repetitions })
}

impl AssignmentPlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, rollout_index: usize) -> Option<&PlanEntry> {
        self.entries.get(rollout_index)
    }

    /// Checks the structural invariants of a plan read back from storage.
    pub fn check(&self) -> Result<(), String> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.rollout_index != i {
                return Err(format!("entry {i} has rollout_index {}", e.rollout_index));
            }
            if e.blinded_label != blinded_label(i) {
                return Err(format!("entry {i} has label {}", e.blinded_label));
            }
            if !self.policies.contains(&e.policy_id) {
                return Err(format!("entry {i} names unknown policy"));
            }
            if !self.ics.contains(&e.ic_id) {
                return Err(format!("entry {i} names unknown initial condition {}", e.ic_id));
            }
        }
        for p in &self.policies {
            for ic in &self.ics {
                let n = self.entries.iter().filter(|e| &e.policy_id == p && e.ic_id == *ic).count();
                if n != self.repetitions as usize {
                    return Err(format!("pair ({p}, {ic}) appears {n} times"));
                }
            }
        }
        Ok(())
    }
}
