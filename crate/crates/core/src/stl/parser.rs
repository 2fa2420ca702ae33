use std::fmt;

use thiserror::Error;

use super::ast::{Comparison, Expr, Formula, Interval};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Cmp(Comparison),
    Implies,
    Iff,
    Not,
    And,
    Or,
    Always,
    Eventually,
    Until,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(n) => write!(f, "`{n}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Cmp(c) => write!(f, "`{}`", c.symbol()),
            Tok::Implies => f.write_str("`->`"),
            Tok::Iff => f.write_str("`<->`"),
            Tok::Not => f.write_str("`not`"),
            Tok::And => f.write_str("`and`"),
            Tok::Or => f.write_str("`or`"),
            Tok::Always => f.write_str("`always`"),
            Tok::Eventually => f.write_str("`eventually`"),
            Tok::Until => f.write_str("`until`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// Found a token that cannot continue the formula here.
    Unexpected {
        found: String,
        expected: Vec<String>,
    },
    /// Input ended while a `(` was still open.
    UnbalancedParenthesis,
    /// Input ended before the formula was complete.
    UnexpectedEnd {
        expected: Vec<String>,
    },
    /// Character sequence that is not an operator of the language.
    UnknownOperator(String),
    InvalidInterval {
        lo: String,
        hi: String,
    },
    /// Product of two signal-dependent terms.
    NonAffine,
}

/// Parse failure with 1-based line and column.
///
/// End-of-input errors point at the last character of the final token.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at line {line}, column {column}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Unexpected { found, expected } => {
                write!(f, "unexpected {found}, expected one of: {}", expected.join(", "))
            }
            ParseErrorKind::UnbalancedParenthesis => f.write_str("unbalanced parenthesis"),
            ParseErrorKind::UnexpectedEnd { expected } => {
                write!(f, "unexpected end of input, expected one of: {}", expected.join(", "))
            }
            ParseErrorKind::UnknownOperator(op) => write!(f, "unknown operator `{op}`"),
            ParseErrorKind::InvalidInterval { lo, hi } => {
                write!(f, "invalid interval [{lo}, {hi}]: need 0 <= a < b")
            }
            ParseErrorKind::NonAffine => {
                f.write_str("product of two signal terms (only affine expressions are allowed)")
            }
        }
    }
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "not" => Tok::Not,
        "and" => Tok::And,
        "or" => Tok::Or,
        "always" => Tok::Always,
        "eventually" => Tok::Eventually,
        "until" => Tok::Until,
        _ => return None,
    })
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let (mut last_line, mut last_col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        let start_col = col;
        let next = chars.get(i + 1).copied();
        let next2 = chars.get(i + 2).copied();
        let (tok, width) = match c {
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '[' => (Tok::LBracket, 1),
            ']' => (Tok::RBracket, 1),
            ',' => (Tok::Comma, 1),
            '+' => (Tok::Plus, 1),
            '*' | '×' => (Tok::Star, 1),
            '-' if next == Some('>') => (Tok::Implies, 2),
            '-' => (Tok::Minus, 1),
            '<' if next == Some('-') && next2 == Some('>') => (Tok::Iff, 3),
            '<' if next == Some('=') => (Tok::Cmp(Comparison::Le), 2),
            '<' => (Tok::Cmp(Comparison::Lt), 1),
            '>' if next == Some('=') => (Tok::Cmp(Comparison::Ge), 2),
            '>' => (Tok::Cmp(Comparison::Gt), 1),
            '≥' => (Tok::Cmp(Comparison::Ge), 1),
            '≤' => (Tok::Cmp(Comparison::Le), 1),
            '□' => (Tok::Always, 1),
            '◇' => (Tok::Eventually, 1),
            '¬' => (Tok::Not, 1),
            '∧' => (Tok::And, 1),
            '∨' => (Tok::Or, 1),
            '→' => (Tok::Implies, 1),
            '↔' => (Tok::Iff, 1),
            c if c.is_ascii_digit() || (c == '.' && next.is_some_and(|n| n.is_ascii_digit())) => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let value = text.parse::<f64>().map_err(|_| ParseError {
                    line,
                    column: start_col,
                    kind: ParseErrorKind::UnknownOperator(text.clone()),
                })?;
                (Tok::Number(value), j - i)
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                (keyword(&word).unwrap_or(Tok::Ident(word)), j - i)
            }
            _ => {
                let mut j = i + 1;
                while j < chars.len() && "=!&|^%/~<>".contains(chars[j]) {
                    j += 1;
                }
                return Err(ParseError {
                    line,
                    column: start_col,
                    kind: ParseErrorKind::UnknownOperator(chars[i..j].iter().collect()),
                });
            }
        };
        out.push(Token { tok, line, column: start_col });
        last_line = line;
        last_col = start_col + width - 1;
        i += width;
        col += width;
    }
    out.push(Token { tok: Tok::Eof, line: last_line, column: last_col });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, expected: &[&str]) -> ParseError {
        let t = &self.tokens[self.pos];
        let expected: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
        let kind = if t.tok == Tok::Eof {
            if self.depth > 0 && expected.iter().any(|e| e == "`)`") {
                ParseErrorKind::UnbalancedParenthesis
            } else {
                ParseErrorKind::UnexpectedEnd { expected }
            }
        } else {
            ParseErrorKind::Unexpected { found: t.tok.to_string(), expected }
        };
        ParseError { line: t.line, column: t.column, kind }
    }

    fn expect(&mut self, tok: Tok, name: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.error_here(&[name]))
        }
    }

    fn open(&mut self) -> PResult<()> {
        self.expect(Tok::LParen, "`(`")?;
        self.depth += 1;
        Ok(())
    }

    fn close(&mut self) -> PResult<()> {
        self.expect(Tok::RParen, "`)`")?;
        self.depth -= 1;
        Ok(())
    }

    fn formula(&mut self) -> PResult<Formula> {
        let mut lhs = self.implies()?;
        while *self.peek() == Tok::Iff {
            self.advance();
            let rhs = self.implies()?;
            lhs = Formula::iff(lhs, rhs);
        }
        Ok(lhs)
    }

    fn implies(&mut self) -> PResult<Formula> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Implies {
            self.advance();
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> PResult<Formula> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.advance();
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<Formula> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.advance();
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Formula> {
        match self.peek() {
            Tok::Not => {
                self.advance();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Always => {
                self.advance();
                let interval = self.interval()?;
                Ok(Formula::always(self.unary()?, interval))
            }
            Tok::Eventually => {
                self.advance();
                let interval = self.interval()?;
                Ok(Formula::eventually(self.unary()?, interval))
            }
            Tok::LParen => {
                // `(` opens a sub-formula, an until, or an arithmetic group of a
                // predicate; try the formula reading first and backtrack.
                let (start, depth) = (self.pos, self.depth);
                let as_formula = self.parenthesized_formula();
                let formula_err = match as_formula {
                    Ok(f) if !self.continues_expression() => return self.maybe_until(f),
                    Ok(_) => None,
                    Err(e) => Some((self.pos, e)),
                };
                let formula_pos = self.pos;
                self.pos = start;
                self.depth = depth;
                match self.predicate() {
                    Ok(p) => Ok(p),
                    Err(pred_err) => {
                        // Report whichever reading got further into the input.
                        match formula_err {
                            Some((_, fe)) if formula_pos > self.pos => Err(fe),
                            Some((_, fe))
                                if formula_pos == self.pos
                                    && matches!(fe.kind, ParseErrorKind::UnbalancedParenthesis) =>
                            {
                                Err(fe)
                            }
                            _ => Err(pred_err),
                        }
                    }
                }
            }
            _ => self.predicate(),
        }
    }

    /// True if the token after a parenthesized group continues arithmetic.
    fn continues_expression(&self) -> bool {
        matches!(self.peek(), Tok::Cmp(_) | Tok::Plus | Tok::Minus | Tok::Star)
    }

    fn parenthesized_formula(&mut self) -> PResult<Formula> {
        self.open()?;
        let f = self.formula()?;
        self.close()?;
        Ok(f)
    }

    fn maybe_until(&mut self, lhs: Formula) -> PResult<Formula> {
        if *self.peek() != Tok::Until {
            return Ok(lhs);
        }
        self.advance();
        let interval = self.interval()?;
        let rhs = self.parenthesized_formula()?;
        Ok(Formula::until(lhs, rhs, interval))
    }

    fn interval(&mut self) -> PResult<Option<Interval>> {
        if *self.peek() != Tok::LBracket {
            return Ok(None);
        }
        let open = self.advance();
        let lo = self.number()?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = self.number()?;
        self.expect(Tok::RBracket, "`]`")?;
        Interval::new(lo, hi).map(Some).ok_or(ParseError {
            line: open.line,
            column: open.column,
            kind: ParseErrorKind::InvalidInterval { lo: lo.to_string(), hi: hi.to_string() },
        })
    }

    fn number(&mut self) -> PResult<f64> {
        let negative = if *self.peek() == Tok::Minus {
            self.advance();
            true
        } else {
            false
        };
        match *self.peek() {
            Tok::Number(n) => {
                self.advance();
                Ok(if negative { -n } else { n })
            }
            _ => Err(self.error_here(&["number"])),
        }
    }

    fn predicate(&mut self) -> PResult<Formula> {
        let lhs = self.expr()?;
        let cmp = match *self.peek() {
            Tok::Cmp(c) => c,
            _ => return Err(self.error_here(&["`>`", "`>=`", "`<`", "`<=`", "`+`", "`-`", "`*`"])),
        };
        self.advance();
        let rhs = self.expr()?;
        Ok(Formula::pred(lhs, cmp, rhs))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.advance();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.advance();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.factor()?;
        while *self.peek() == Tok::Star {
            let star = self.advance();
            let rhs = self.factor()?;
            if !lhs.is_constant() && !rhs.is_constant() {
                return Err(ParseError { line: star.line, column: star.column, kind: ParseErrorKind::NonAffine });
            }
            lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.advance();
                Ok(Expr::Const(n))
            }
            Tok::Ident(name) => {
                self.advance();
                Ok(Expr::Signal(name))
            }
            Tok::Minus => {
                self.advance();
                if let Tok::Number(n) = *self.peek() {
                    self.advance();
                    return Ok(Expr::Const(-n));
                }
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Tok::LParen => {
                self.open()?;
                let e = self.expr()?;
                self.close()?;
                Ok(e)
            }
            _ => Err(self.error_here(&["number", "signal name", "`(`", "`-`"])),
        }
    }
}

/// Parses STL surface syntax into a [`Formula`].
pub fn parse_formula(source: &str) -> Result<Formula, ParseError> {
    let tokens = lex(source)?;
    let mut p = Parser { tokens, pos: 0, depth: 0 };
    let f = p.formula()?;
    if *p.peek() != Tok::Eof {
        let expected: &[&str] = if p.depth == 0 && *p.peek() == Tok::RParen {
            &["end of input"]
        } else {
            &["`and`", "`or`", "`->`", "`<->`", "end of input"]
        };
        return Err(p.error_here(expected));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::ast::Comparison::*;

    fn sig(s: &str) -> Expr {
        Expr::signal(s)
    }

    #[test]
    fn bowl_formula() {
        let f = parse_formula("always ((contact > 100) -> (z > 0.25))").unwrap();
        let expected = Formula::always(
            Formula::implies(
                Formula::pred(sig("contact"), Gt, Expr::Const(100.0)),
                Formula::pred(sig("z"), Gt, Expr::Const(0.25)),
            ),
            None,
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn timed_eventually() {
        let f = parse_formula("eventually[0,5] (x >= 1 and y < 2)").unwrap();
        let expected = Formula::eventually(
            Formula::and(Formula::pred(sig("x"), Ge, Expr::Const(1.0)), Formula::pred(sig("y"), Lt, Expr::Const(2.0))),
            Interval::new(0.0, 5.0),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn unbalanced_parenthesis_column() {
        let err = parse_formula("always ((x > 1)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnbalancedParenthesis);
        assert_eq!((err.line, err.column), (1, 15));
    }

    #[test]
    fn until_and_unicode() {
        let f = parse_formula("(x>0) until[0,2] (y>0)").unwrap();
        assert!(matches!(f, Formula::Until(_, _, Some(i)) if i.hi() == 2.0));
        let g = parse_formula("□((gripper_diff*1000 > 9) → (z < 0.25))").unwrap();
        assert_eq!(g, parse_formula("always ((gripper_diff*1000 > 9) -> (z < 0.25))").unwrap());
        let h = parse_formula("¬◇(x > 0 ∧ y > 0 ∨ z > 0)").unwrap();
        assert_eq!(h, parse_formula("not eventually (x > 0 and y > 0 or z > 0)").unwrap());
    }

    #[test]
    fn parenthesized_arithmetic_in_predicate() {
        let f = parse_formula("(x + 1) * 2 > (y)").unwrap();
        let expected = Formula::pred(
            Expr::Mul(Box::new(Expr::Add(Box::new(sig("x")), Box::new(Expr::Const(1.0)))), Box::new(Expr::Const(2.0))),
            Gt,
            sig("y"),
        );
        assert_eq!(f, expected);
        assert!(parse_formula("((x)) > 1").is_ok());
    }

    #[test]
    fn precedence() {
        let f = parse_formula("a > 0 or b > 0 and c > 0 -> d > 0 -> e > 0").unwrap();
        let p = |s| Formula::pred(sig(s), Gt, Expr::Const(0.0));
        let expected =
            Formula::implies(Formula::or(p("a"), Formula::and(p("b"), p("c"))), Formula::implies(p("d"), p("e")));
        assert_eq!(f, expected);
    }

    #[test]
    fn errors() {
        let e = parse_formula("eventually[5,1] (x > 0)").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::InvalidInterval { .. }));
        assert_eq!(e.column, 11);
        let e = parse_formula("always[2,2] (x > 0)").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::InvalidInterval { .. }));
        let e = parse_formula("x == 1").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownOperator("==".into()));
        assert_eq!(e.column, 3);
        let e = parse_formula("x * y > 1").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NonAffine);
        let e = parse_formula("x > 1 y").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Unexpected { .. }));
        assert_eq!(e.column, 7);
        let e = parse_formula("x >\n  always").unwrap_err();
        assert_eq!((e.line, e.column), (2, 3));
        assert!(parse_formula("").is_err());
        assert!(parse_formula("(x > 1))").is_err());
    }

    #[test]
    fn display_reparses() {
        for src in [
            "always ((contact > 100) -> (z > 0.25))",
            "eventually[0,5] (x >= 1 and y < 2)",
            "(x>0) until[0.5,2] (y>0) <-> not (z <= -3)",
            "-(x - (y - 2)) * 3 > -x * -1.5 + 2 * (y * 4)",
            "always[1e-3, 2.5e1] eventually (a - b - c < a - (b - c))",
        ] {
            let f = parse_formula(src).unwrap();
            let printed = f.to_string();
            assert_eq!(parse_formula(&printed).unwrap(), f, "{printed}");
        }
    }
}
