use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Closed time window `[lo, hi]` relative to the evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    /// Requires `0 <= lo < hi`, both finite.
    pub fn new(lo: f64, hi: f64) -> Option<Self> {
        (lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi).then_some(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

/// Affine arithmetic over signals and constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Const(f64),
    Signal(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn signal(name: &str) -> Self {
        Expr::Signal(name.to_string())
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Signal(_) => false,
            Expr::Neg(e) => e.is_constant(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.is_constant() && b.is_constant(),
        }
    }

    /// Evaluates with `lookup` resolving signal values.
    pub fn eval(&self, lookup: &impl Fn(&str) -> f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Signal(s) => lookup(s),
            Expr::Neg(e) => -e.eval(lookup),
            Expr::Add(a, b) => a.eval(lookup) + b.eval(lookup),
            Expr::Sub(a, b) => a.eval(lookup) - b.eval(lookup),
            Expr::Mul(a, b) => a.eval(lookup) * b.eval(lookup),
        }
    }

    fn collect_signals<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Signal(s) => {
                out.insert(s);
            }
            Expr::Neg(e) => e.collect_signals(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.collect_signals(out);
                b.collect_signals(out);
            }
        }
    }

    fn is_sum(&self) -> bool {
        matches!(self, Expr::Add(..) | Expr::Sub(..))
    }

    fn is_atom(&self) -> bool {
        matches!(self, Expr::Const(_) | Expr::Signal(_))
    }
}

fn paren(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Signal(s) => f.write_str(s),
            Expr::Neg(e) => {
                f.write_str("-")?;
                paren(f, e, !e.is_atom())
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let op = if matches!(self, Expr::Add(..)) { "+" } else { "-" };
                write!(f, "{a} {op} ")?;
                paren(f, b, b.is_sum())
            }
            Expr::Mul(a, b) => {
                paren(f, a, a.is_sum())?;
                f.write_str(" * ")?;
                paren(f, b, b.is_sum() || matches!(**b, Expr::Mul(..)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Gt,
    Ge,
    Lt,
    Le,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::Lt => "<",
            Comparison::Le => "<=",
        }
    }
}

/// Atomic proposition `lhs <cmp> rhs`, true iff its margin `h >= 0`.
///
/// `>` and `>=` both use `h = lhs - rhs`; `<` and `<=` use `h = rhs - lhs`.
/// Strictness is therefore not observable: `x > 0` holds when `x == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub lhs: Expr,
    pub cmp: Comparison,
    pub rhs: Expr,
}

impl Predicate {
    pub fn new(lhs: Expr, cmp: Comparison, rhs: Expr) -> Self {
        Self { lhs, cmp, rhs }
    }

    /// The predicate margin `h`.
    pub fn margin(&self, lookup: &impl Fn(&str) -> f64) -> f64 {
        match self.cmp {
            Comparison::Gt | Comparison::Ge => self.lhs.eval(lookup) - self.rhs.eval(lookup),
            Comparison::Lt | Comparison::Le => self.rhs.eval(lookup) - self.lhs.eval(lookup),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.cmp.symbol(), self.rhs)
    }
}

/// STL abstract syntax tree. `None` intervals are untimed (span to trace end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    Predicate(Predicate),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Until(Box<Formula>, Box<Formula>, Option<Interval>),
    Always(Box<Formula>, Option<Interval>),
    Eventually(Box<Formula>, Option<Interval>),
}

impl Formula {
    pub fn pred(lhs: Expr, cmp: Comparison, rhs: Expr) -> Self {
        Formula::Predicate(Predicate::new(lhs, cmp, rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Self {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    pub fn until(a: Formula, b: Formula, i: Option<Interval>) -> Self {
        Formula::Until(Box::new(a), Box::new(b), i)
    }

    pub fn always(f: Formula, i: Option<Interval>) -> Self {
        Formula::Always(Box::new(f), i)
    }

    pub fn eventually(f: Formula, i: Option<Interval>) -> Self {
        Formula::Eventually(Box::new(f), i)
    }

    /// Signal names referenced anywhere in the formula, sorted.
    pub fn signals(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_signals(&mut out);
        out
    }

    fn collect_signals<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Formula::Predicate(p) => {
                p.lhs.collect_signals(out);
                p.rhs.collect_signals(out);
            }
            Formula::Not(f) | Formula::Always(f, _) | Formula::Eventually(f, _) => f.collect_signals(out),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b)
            | Formula::Until(a, b, _) => {
                a.collect_signals(out);
                b.collect_signals(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Predicate(_) => 1,
            Formula::Not(f) | Formula::Always(f, _) | Formula::Eventually(f, _) => 1 + f.depth(),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b)
            | Formula::Until(a, b, _) => 1 + a.depth().max(b.depth()),
        }
    }
}

fn opt_interval(i: &Option<Interval>) -> String {
    i.map(|i| i.to_string()).unwrap_or_default()
}

/// Fully parenthesized surface syntax; parses back to an identical tree.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Predicate(p) => write!(f, "{p}"),
            Formula::Not(a) => write!(f, "not ({a})"),
            Formula::And(a, b) => write!(f, "({a}) and ({b})"),
            Formula::Or(a, b) => write!(f, "({a}) or ({b})"),
            Formula::Implies(a, b) => write!(f, "({a}) -> ({b})"),
            Formula::Iff(a, b) => write!(f, "({a}) <-> ({b})"),
            Formula::Until(a, b, i) => write!(f, "({a}) until{} ({b})", opt_interval(i)),
            Formula::Always(a, i) => write!(f, "always{} ({a})", opt_interval(i)),
            Formula::Eventually(a, i) => write!(f, "eventually{} ({a})", opt_interval(i)),
        }
    }
}
