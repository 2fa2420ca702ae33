//! Offline monitors over sampled traces.
//!
//! Signals are sample-and-hold. A temporal window `[a, b]` evaluated at time
//! `t` covers the samples with timestamps in `[t + a, t + b]`; untimed
//! operators cover `[t, end]`. Window bounds are compared with a relative
//! tolerance of [`TIME_TOLERANCE`] so that grids such as `k * 0.1` select the
//! samples one expects.

use std::collections::VecDeque;

use thiserror::Error;

use super::ast::{Formula, Interval, Predicate};
use crate::model::Trace;

/// Relative tolerance applied to window bounds.
pub const TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("signal `{0}` is not in the trace")]
    UnknownSignal(String),
    #[error("evaluation time {t0} outside trace span [{start}, {end}]")]
    TimeOutOfRange { t0: f64, start: f64, end: f64 },
    #[error("insufficient trace: window starting at {window_start} lies beyond trace end {end}")]
    InsufficientTrace { window_start: f64, end: f64 },
    #[error("no samples in window [{lo}, {hi}]")]
    EmptyWindow { lo: f64, hi: f64 },
}

pub(crate) fn tol(x: f64) -> f64 {
    TIME_TOLERANCE * x.abs().max(1.0)
}

/// Index range `[first, last]` of samples in the window of `interval` at `t`.
pub(crate) fn window(times: &[f64], t: f64, interval: Option<Interval>) -> Result<(usize, usize), EvalError> {
    let end = times[times.len() - 1];
    let (lo, hi) = match interval {
        Some(i) => (t + i.lo(), t + i.hi()),
        None => (t, f64::INFINITY),
    };
    if lo > end + tol(end) {
        return Err(EvalError::InsufficientTrace { window_start: lo, end });
    }
    let first = times.partition_point(|&s| s < lo - tol(lo));
    let last_excl = if hi.is_finite() { times.partition_point(|&s| s <= hi + tol(hi)) } else { times.len() };
    if first >= last_excl {
        return Err(EvalError::EmptyWindow { lo, hi });
    }
    Ok((first, last_excl - 1))
}

/// Index of the sample holding at time `t`.
pub(crate) fn held_index(times: &[f64], t: f64) -> usize {
    times.partition_point(|&s| s <= t + tol(t)).saturating_sub(1)
}

fn check_inputs(formula: &Formula, trace: &Trace, t0: f64) -> Result<(), EvalError> {
    if let Some(missing) = formula.signals().into_iter().find(|s| trace.signal(s).is_none()) {
        return Err(EvalError::UnknownSignal(missing.to_string()));
    }
    if !(t0 >= trace.start() && t0 <= trace.end()) {
        return Err(EvalError::TimeOutOfRange { t0, start: trace.start(), end: trace.end() });
    }
    Ok(())
}

fn margin_at(p: &Predicate, trace: &Trace, i: usize) -> f64 {
    p.margin(&|name| trace.signal(name).expect("signals checked")[i])
}

type Cell = Result<f64, EvalError>;

/// Robustness of `formula` on `trace` at time `t0`.
pub fn eval_robustness(formula: &Formula, trace: &Trace, t0: f64) -> Result<f64, EvalError> {
    check_inputs(formula, trace, t0)?;
    Robustness { trace }.at(formula, t0)
}

/// Robustness at the first sample.
pub fn robustness(formula: &Formula, trace: &Trace) -> Result<f64, EvalError> {
    eval_robustness(formula, trace, trace.start())
}

struct Robustness<'a> {
    trace: &'a Trace,
}

impl Robustness<'_> {
    fn at(&self, f: &Formula, t: f64) -> Cell {
        let times = self.trace.times();
        match f {
            Formula::Predicate(p) => Ok(margin_at(p, self.trace, held_index(times, t))),
            Formula::Not(a) => Ok(-self.at(a, t)?),
            Formula::And(a, b) => Ok(self.at(a, t)?.min(self.at(b, t)?)),
            Formula::Or(a, b) => Ok(self.at(a, t)?.max(self.at(b, t)?)),
            Formula::Implies(a, b) => Ok((-self.at(a, t)?).max(self.at(b, t)?)),
            Formula::Iff(a, b) => Ok(iff(self.at(a, t)?, self.at(b, t)?)),
            Formula::Always(a, i) => {
                let (lo, hi) = window(times, t, *i)?;
                fold_window(&self.signal(a)[lo..=hi], f64::min)
            }
            Formula::Eventually(a, i) => {
                let (lo, hi) = window(times, t, *i)?;
                fold_window(&self.signal(a)[lo..=hi], f64::max)
            }
            Formula::Until(a, b, i) => {
                let lhs = self.signal(a);
                let rhs = self.signal(b);
                until_at(times, &lhs, &rhs, t, *i)
            }
        }
    }

    /// Robustness at every sample time.
    fn signal(&self, f: &Formula) -> Vec<Cell> {
        let times = self.trace.times();
        let n = times.len();
        let zip = |a: &Formula, b: &Formula, op: fn(f64, f64) -> f64| -> Vec<Cell> {
            let (x, y) = (self.signal(a), self.signal(b));
            x.into_iter().zip(y).map(|(x, y)| Ok(op(x?, y?))).collect()
        };
        match f {
            Formula::Predicate(p) => (0..n).map(|i| Ok(margin_at(p, self.trace, i))).collect(),
            Formula::Not(a) => self.signal(a).into_iter().map(|c| c.map(|v| -v)).collect(),
            Formula::And(a, b) => zip(a, b, f64::min),
            Formula::Or(a, b) => zip(a, b, f64::max),
            Formula::Implies(a, b) => zip(a, b, |x, y| (-x).max(y)),
            Formula::Iff(a, b) => zip(a, b, iff),
            Formula::Always(a, i) => sliding(times, &self.signal(a), *i, true),
            Formula::Eventually(a, i) => sliding(times, &self.signal(a), *i, false),
            Formula::Until(a, b, i) => {
                let lhs = self.signal(a);
                let rhs = self.signal(b);
                if i.is_none() {
                    until_untimed(&lhs, &rhs)
                } else {
                    (0..n).map(|k| until_at(times, &lhs, &rhs, times[k], *i)).collect()
                }
            }
        }
    }
}

fn iff(x: f64, y: f64) -> f64 {
    // (x -> y) and (y -> x)
    ((-x).max(y)).min((-y).max(x))
}

fn fold_window(cells: &[Cell], op: fn(f64, f64) -> f64) -> Cell {
    let mut acc: Option<f64> = None;
    for c in cells {
        let v = c.clone()?;
        acc = Some(acc.map_or(v, |a| op(a, v)));
    }
    Ok(acc.expect("window is non-empty"))
}

/// Windowed min (`minimum = true`) or max at every sample, using a monotone
/// deque over the non-decreasing window bounds.
fn sliding(times: &[f64], child: &[Cell], interval: Option<Interval>, minimum: bool) -> Vec<Cell> {
    let n = times.len();
    // next_err[j]: first index >= j whose cell is an error.
    let mut next_err = vec![n; n + 1];
    for j in (0..n).rev() {
        next_err[j] = if child[j].is_err() { j } else { next_err[j + 1] };
    }
    let better = |a: f64, b: f64| if minimum { a <= b } else { a >= b };
    let mut out = Vec::with_capacity(n);
    let mut deque: VecDeque<usize> = VecDeque::new();
    let mut pushed = 0usize;
    for k in 0..n {
        let (lo, hi) = match window(times, times[k], interval) {
            Ok(w) => w,
            Err(e) => {
                out.push(Err(e));
                continue;
            }
        };
        if next_err[lo] <= hi {
            out.push(child[next_err[lo]].clone());
        }
        while pushed <= hi {
            if let Ok(v) = child[pushed] {
                while let Some(&back) = deque.back() {
                    let bv = *child[back].as_ref().expect("deque holds values");
                    if better(v, bv) {
                        deque.pop_back();
                    } else {
                        break;
                    }
                }
                deque.push_back(pushed);
            }
            pushed += 1;
        }
        while deque.front().is_some_and(|&f| f < lo) {
            deque.pop_front();
        }
        if next_err[lo] > hi {
            let front = *deque.front().expect("window has a value");
            out.push(child[front].clone());
        }
    }
    out
}

fn until_untimed(lhs: &[Cell], rhs: &[Cell]) -> Vec<Cell> {
    // U(k) = min(lhs[k], max(rhs[k], U(k + 1)))
    let n = lhs.len();
    let mut out: Vec<Cell> = vec![Ok(0.0); n];
    let mut next: Option<Cell> = None;
    for k in (0..n).rev() {
        let v = (|| {
            let l = lhs[k].clone()?;
            let r = rhs[k].clone()?;
            let inner = match &next {
                None => r,
                Some(u) => r.max(u.clone()?),
            };
            Ok(l.min(inner))
        })();
        out[k] = v.clone();
        next = Some(v);
    }
    out
}

fn until_at(times: &[f64], lhs: &[Cell], rhs: &[Cell], t: f64, interval: Option<Interval>) -> Cell {
    let (lo, hi) = window(times, t, interval)?;
    let start = times.partition_point(|&s| s < t - tol(t));
    let mut running = f64::INFINITY;
    let mut best = f64::NEG_INFINITY;
    for j in start..=hi {
        running = running.min(lhs[j].clone()?);
        if j >= lo {
            best = best.max(rhs[j].clone()?.min(running));
        }
    }
    Ok(best)
}

/// Boolean satisfaction of `formula` on `trace` at `t0`.
///
/// Computed with its own truth-valued recursion; agrees with
/// `eval_robustness(..) >= 0` except on exact zero-robustness ties under
/// negation, where the Boolean semantics are authoritative.
pub fn eval_boolean(formula: &Formula, trace: &Trace, t0: f64) -> Result<bool, EvalError> {
    check_inputs(formula, trace, t0)?;
    Satisfaction { trace }.at(formula, t0)
}

struct Satisfaction<'a> {
    trace: &'a Trace,
}

type Truth = Result<bool, EvalError>;

impl Satisfaction<'_> {
    fn at(&self, f: &Formula, t: f64) -> Truth {
        let times = self.trace.times();
        match f {
            Formula::Predicate(p) => Ok(margin_at(p, self.trace, held_index(times, t)) >= 0.0),
            Formula::Not(a) => Ok(!self.at(a, t)?),
            Formula::And(a, b) => Ok(self.at(a, t)? & self.at(b, t)?),
            Formula::Or(a, b) => Ok(self.at(a, t)? | self.at(b, t)?),
            Formula::Implies(a, b) => Ok(!self.at(a, t)? | self.at(b, t)?),
            Formula::Iff(a, b) => Ok(self.at(a, t)? == self.at(b, t)?),
            Formula::Always(a, i) => quantify(times, &self.signal(a), t, *i, true),
            Formula::Eventually(a, i) => quantify(times, &self.signal(a), t, *i, false),
            Formula::Until(a, b, i) => holds_until(times, &self.signal(a), &self.signal(b), t, *i),
        }
    }

    fn signal(&self, f: &Formula) -> Vec<Truth> {
        let times = self.trace.times();
        let zip = |a: &Formula, b: &Formula, op: fn(bool, bool) -> bool| -> Vec<Truth> {
            let (x, y) = (self.signal(a), self.signal(b));
            x.into_iter().zip(y).map(|(x, y)| Ok(op(x?, y?))).collect()
        };
        match f {
            Formula::Predicate(p) => (0..times.len()).map(|i| Ok(margin_at(p, self.trace, i) >= 0.0)).collect(),
            Formula::Not(a) => self.signal(a).into_iter().map(|v| v.map(|b| !b)).collect(),
            Formula::And(a, b) => zip(a, b, |x, y| x & y),
            Formula::Or(a, b) => zip(a, b, |x, y| x | y),
            Formula::Implies(a, b) => zip(a, b, |x, y| !x | y),
            Formula::Iff(a, b) => zip(a, b, |x, y| x == y),
            Formula::Always(a, i) | Formula::Eventually(a, i) => {
                let child = self.signal(a);
                let all = matches!(f, Formula::Always(..));
                times.iter().map(|&t| quantify(times, &child, t, *i, all)).collect()
            }
            Formula::Until(a, b, i) => {
                let (lhs, rhs) = (self.signal(a), self.signal(b));
                times.iter().map(|&t| holds_until(times, &lhs, &rhs, t, *i)).collect()
            }
        }
    }
}

fn quantify(times: &[f64], child: &[Truth], t: f64, interval: Option<Interval>, all: bool) -> Truth {
    let (lo, hi) = window(times, t, interval)?;
    let mut acc = all;
    for v in &child[lo..=hi] {
        let v = v.clone()?;
        acc = if all { acc & v } else { acc | v };
    }
    Ok(acc)
}

fn holds_until(times: &[f64], lhs: &[Truth], rhs: &[Truth], t: f64, interval: Option<Interval>) -> Truth {
    let (lo, hi) = window(times, t, interval)?;
    let start = times.partition_point(|&s| s < t - tol(t));
    for j in start..=hi {
        if !lhs[j].clone()? {
            return Ok(false);
        }
        if j >= lo && rhs[j].clone()? {
            return Ok(true);
        }
    }
    Ok(false)
}
