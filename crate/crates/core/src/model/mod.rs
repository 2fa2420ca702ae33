//! Domain types shared across the toolkit.

mod rubric;
mod task;
mod trace;

pub use rubric::{aggregate_rubric, RolloutRecord, RubricError, RubricRow, RubricTable, YesNo};
pub use task::{validate_task_spec, InitialCondition, MetricConfig, RubricQuestion, StlSpec, TaskSpec, Violation};
pub use trace::{Trace, TraceError};

#[cfg(test)]
pub(crate) use task::fixtures;
