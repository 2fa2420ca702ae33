//! Signal Temporal Logic: parsing plus Boolean and robustness monitoring.
//!
//! Predicates follow the convention "true iff `h >= 0`", and robustness uses
//! the standard min/max recursion:
//!
//! | formula | robustness |
//! |---|---|
//! | `lhs > rhs`, `lhs >= rhs` | `lhs - rhs` |
//! | `lhs < rhs`, `lhs <= rhs` | `rhs - lhs` |
//! | `not f` | `-ρ(f)` |
//! | `f and g` / `f or g` | `min` / `max` |
//! | `f -> g` | `max(-ρ(f), ρ(g))` |
//! | `always[a,b] f` / `eventually[a,b] f` | `min` / `max` over the window |
//! | `f until[a,b] g` | `max` over `t'` in window of `min(ρ(g,t'), min over [t,t'] of ρ(f))` |
//!
//! Strict and non-strict comparisons normalize to the same margin, so
//! `x > 0` is **true** when `x` is exactly zero.

mod ast;
mod monitor;
mod parser;

pub use ast::{Comparison, Expr, Formula, Interval, Predicate};
pub use monitor::{eval_boolean, eval_robustness, robustness, EvalError, TIME_TOLERANCE};
pub use parser::{parse_formula, ParseError, ParseErrorKind};
