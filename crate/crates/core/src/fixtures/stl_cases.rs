//! Randomized STL cases and a direct recursive evaluator to check the
//! monitor against.

use std::collections::BTreeMap;

use rand::Rng;

use crate::model::Trace;
use crate::stl::{Comparison, Expr, Formula, Interval};

/// Robustness at sample `i`; `None` where a needed window is empty or
/// starts past the end of the trace.
pub fn oracle(f: &Formula, tr: &Trace, i: usize) -> Option<f64> {
    let ts = tr.times();
    let eps = |x: f64| 1e-9 * x.abs().max(1.0);
    let window = |iv: &Option<Interval>| -> Option<Vec<usize>> {
        let (lo, hi) = iv.map_or((ts[i], f64::INFINITY), |iv| (ts[i] + iv.lo(), ts[i] + iv.hi()));
        let end = ts[ts.len() - 1];
        if lo > end + eps(end) {
            return None;
        }
        let js: Vec<usize> =
            (0..ts.len()).filter(|&j| ts[j] >= lo - eps(lo) && (hi.is_infinite() || ts[j] <= hi + eps(hi))).collect();
        (!js.is_empty()).then_some(js)
    };
    Some(match f {
        Formula::Predicate(p) => p.margin(&|s| tr.signal(s).unwrap()[i]),
        Formula::Not(a) => -oracle(a, tr, i)?,
        Formula::And(a, b) => oracle(a, tr, i)?.min(oracle(b, tr, i)?),
        Formula::Or(a, b) => oracle(a, tr, i)?.max(oracle(b, tr, i)?),
        Formula::Implies(a, b) => (-oracle(a, tr, i)?).max(oracle(b, tr, i)?),
        Formula::Iff(a, b) => {
            let (x, y) = (oracle(a, tr, i)?, oracle(b, tr, i)?);
            (-x).max(y).min((-y).max(x))
        }
        Formula::Always(a, iv) => {
            window(iv)?.into_iter().map(|j| oracle(a, tr, j)).try_fold(f64::INFINITY, |m, v| Some(m.min(v?)))?
        }
        Formula::Eventually(a, iv) => {
            window(iv)?.into_iter().map(|j| oracle(a, tr, j)).try_fold(f64::NEG_INFINITY, |m, v| Some(m.max(v?)))?
        }
        Formula::Until(a, b, iv) => {
            let js = window(iv)?;
            let mut best = f64::NEG_INFINITY;
            for j in (i..ts.len()).filter(|j| *j <= *js.last().unwrap()) {
                let hold = (i..=j).map(|k| oracle(a, tr, k)).try_fold(f64::INFINITY, |m, v| Some(m.min(v?)))?;
                let reach = oracle(b, tr, j)?;
                if js.contains(&j) {
                    best = best.max(reach.min(hold));
                }
            }
            best
        }
    })
}

const SIGNALS: [&str; 3] = ["x", "y", "z"];

/// Grid `k * 0.1`, 8 to 29 samples, signals `x`, `y`, `z` uniform in `[-3, 3)`.
pub fn random_trace<R: Rng>(rng: &mut R) -> Trace {
    let n = rng.random_range(8..30);
    let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
    let signals: BTreeMap<String, Vec<f64>> =
        SIGNALS.iter().map(|s| (s.to_string(), (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())).collect();
    Trace::new(times, signals).expect("grid trace is valid")
}

/// `c0*x + c1*y + c2*z <cmp> k` with continuous coefficients, so exact
/// zero margins do not occur.
fn affine_predicate<R: Rng>(rng: &mut R) -> Formula {
    let terms = SIGNALS
        .iter()
        .map(|s| Expr::Mul(Box::new(Expr::Const(rng.random_range(-2.0..2.0))), Box::new(Expr::signal(s))))
        .reduce(|a, b| Expr::Add(Box::new(a), Box::new(b)))
        .expect("three signals");
    let cmp = [Comparison::Gt, Comparison::Ge, Comparison::Lt, Comparison::Le][rng.random_range(0..4)];
    Formula::pred(terms, cmp, Expr::Const(rng.random_range(-2.0..2.0)))
}

fn random_interval<R: Rng>(rng: &mut R) -> Option<Interval> {
    if rng.random_bool(0.3) {
        return None;
    }
    let lo = [0.0, 0.1, 0.2, 0.3, 0.5][rng.random_range(0..5)];
    let len = [0.1, 0.2, 0.4, 0.7][rng.random_range(0..4)];
    Interval::new(lo, lo + len)
}

/// Random formula of the given depth with at most `temporal` nested
/// temporal operators on any path.
pub fn random_formula<R: Rng>(rng: &mut R, depth: u32, temporal: u32) -> Formula {
    if depth == 0 || rng.random_bool(0.25) {
        return affine_predicate(rng);
    }
    let sub = |rng: &mut R, t| random_formula(rng, depth - 1, t);
    let choice = if temporal == 0 { rng.random_range(0..5) } else { rng.random_range(0..8) };
    match choice {
        0 => Formula::not(sub(rng, temporal)),
        1 => Formula::and(sub(rng, temporal), sub(rng, temporal)),
        2 => Formula::or(sub(rng, temporal), sub(rng, temporal)),
        3 => Formula::implies(sub(rng, temporal), sub(rng, temporal)),
        4 => Formula::iff(sub(rng, temporal), sub(rng, temporal)),
        5 => Formula::always(sub(rng, temporal - 1), random_interval(rng)),
        6 => Formula::eventually(sub(rng, temporal - 1), random_interval(rng)),
        _ => Formula::until(sub(rng, temporal - 1), sub(rng, temporal - 1), random_interval(rng)),
    }
}

/// A trace, a formula and a start sample in the first half of the trace.
pub fn random_case<R: Rng>(rng: &mut R) -> (Trace, Formula, usize) {
    let tr = random_trace(rng);
    let f = random_formula(rng, 4, 2);
    let i = rng.random_range(0..tr.len() / 2);
    (tr, f, i)
}
