//! Toolkit for evaluating learned robot policies.
//!
//! - [`stl`]: Signal Temporal Logic parsing with Boolean and robustness monitors.
//! - [`metrics`]: speed profiles, SPARC smoothness, velocity peaks, contact segmentation.
//! - [`stats`]: Beta-Bernoulli posteriors, superiority probability, credible and exact intervals.
//! - [`store`]: blind A/B assignment plans and the append-only session event log.
//! - [`report`]: evaluation report assembly and rendering.
//! - [`service`]: the blind session workflow used by the HTTP service and CLI.

#[cfg(feature = "fixtures")]
pub mod fixtures;
pub mod metrics;
pub mod model;
pub mod report;
pub mod service;
pub mod stats;
pub mod stl;
pub mod store;

pub use model::{RolloutRecord, TaskSpec, Trace};
