use super::MetricError;
use crate::model::Trace;

/// A trace cut at first contact. Either side is `None` when it has no samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSplit {
    pub pre_contact: Option<Trace>,
    pub post_contact: Option<Trace>,
    pub contact_time: Option<f64>,
}

/// Splits at the first sample whose `contact_signal` exceeds `threshold`.
///
/// With no contact the whole trace is returned as `pre_contact`.
pub fn split_at_contact(trace: &Trace, contact_signal: &str, threshold: f64) -> Result<ContactSplit, MetricError> {
    let contact = trace.signal(contact_signal).ok_or_else(|| MetricError::MissingSignal(contact_signal.to_string()))?;
    let first = contact.iter().position(|&v| v > threshold);
    Ok(match first {
        None => ContactSplit { pre_contact: Some(trace.clone()), post_contact: None, contact_time: None },
        Some(k) => ContactSplit {
            pre_contact: trace.slice(0..k),
            post_contact: trace.slice(k..trace.len()),
            contact_time: Some(trace.times()[k]),
        },
    })
}
