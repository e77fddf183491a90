//! Formula syntax: AST, text parser, and canonical printer.
//!
//! The concrete syntax is plain ASCII. Modal operators take an exact
//! rational threshold written `a/b` (or a bare integer):
//!
//! ```text
//! pathf  := ("NAB" | "DAG") rat statef
//! statef := orf
//! orf    := andf ("OR" andf)*
//! andf   := unf ("AND" unf)*
//! unf    := "NOT" unf | modal | atom | "(" statef ")"
//! modal  := ("BOX" | "BBOX" | "CIRC" | "TRI") rat unf
//! rat    := int | int "/" int
//! atom   := identifier   (letters, digits, underscore; starts with a letter)
//! ```
//!
//! `NOT` binds tighter than `AND`, `AND` tighter than `OR`; modal operators
//! bind tighter than the binary connectives. Keywords are reserved and
//! cannot be used as atom names.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

/// Errors produced by the formula parser and by threshold validation.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("threshold {value} is outside [0, 1]")]
    ThresholdOutOfRange { value: String },
    #[error("zero denominator in rational")]
    ZeroDenominator,
}

/// A rational threshold q, kept in lowest terms and guaranteed to lie in [0, 1].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Threshold(BigRational);

impl Threshold {
    pub fn new(value: BigRational) -> Result<Self, FormulaError> {
        if value < BigRational::zero() || value > BigRational::one() {
            return Err(FormulaError::ThresholdOutOfRange {
                value: format_rational(&value),
            });
        }
        Ok(Threshold(value))
    }

    /// Convenience constructor from an integer numerator/denominator pair.
    pub fn ratio(num: i64, den: i64) -> Result<Self, FormulaError> {
        if den == 0 {
            return Err(FormulaError::ZeroDenominator);
        }
        Threshold::new(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn as_ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_rational(&self.0))
    }
}

/// Renders a rational as `a/b`, or just `a` when the denominator is 1.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `a` or `a/b` into an exact rational (reduced automatically).
pub fn parse_rational(text: &str) -> Result<BigRational, FormulaError> {
    let text = text.trim();
    let (num_str, den_str) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim())),
        None => (text, None),
    };
    let numer = BigInt::from_str(num_str).map_err(|_| FormulaError::Syntax {
        position: 0,
        expected: "rational number".to_string(),
    })?;
    let denom = match den_str {
        Some(d) => BigInt::from_str(d).map_err(|_| FormulaError::Syntax {
            position: 0,
            expected: "rational denominator".to_string(),
        })?,
        None => BigInt::one(),
    };
    if denom.is_zero() {
        return Err(FormulaError::ZeroDenominator);
    }
    Ok(BigRational::new(numer, denom))
}

/// State formulas: propositional connectives plus the four state modalities.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StateFormula {
    Atom(String),
    Not(std::boxed::Box<StateFormula>),
    And(std::boxed::Box<StateFormula>, std::boxed::Box<StateFormula>),
    Or(std::boxed::Box<StateFormula>, std::boxed::Box<StateFormula>),
    /// `BOX q f`: along the series so far, f has held in at least a q share of steps.
    Box(Threshold, std::boxed::Box<StateFormula>),
    /// `BBOX q f`: some same-length prefix of a distribution-compatible series
    /// reaches at least a q share of f-steps.
    BlackBox(Threshold, std::boxed::Box<StateFormula>),
    /// `CIRC q f`: f has already held at least q * n times, n the full horizon.
    Circ(Threshold, std::boxed::Box<StateFormula>),
    /// `TRI q f`: some distribution-compatible completion carries f in at least
    /// a q share of the remaining steps.
    Tri(Threshold, std::boxed::Box<StateFormula>),
}

/// Path formulas; the grammar only allows them at the top level.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PathFormula {
    /// `NAB q f`: on a complete series, f holds at least q * n times.
    Nabla(Threshold, StateFormula),
    /// `DAG q f`: the share of distribution-compatible completions is at least q.
    Dagger(Threshold, StateFormula),
}

/// Either kind of formula, as returned by [`parse_formula`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    State(StateFormula),
    Path(PathFormula),
}

impl StateFormula {
    pub fn atom(name: impl Into<String>) -> Self {
        StateFormula::Atom(name.into())
    }
    pub fn not(f: StateFormula) -> Self {
        StateFormula::Not(std::boxed::Box::new(f))
    }
    pub fn and(a: StateFormula, b: StateFormula) -> Self {
        StateFormula::And(std::boxed::Box::new(a), std::boxed::Box::new(b))
    }
    pub fn or(a: StateFormula, b: StateFormula) -> Self {
        StateFormula::Or(std::boxed::Box::new(a), std::boxed::Box::new(b))
    }
    pub fn boxed(q: Threshold, f: StateFormula) -> Self {
        StateFormula::Box(q, std::boxed::Box::new(f))
    }
    pub fn black_box(q: Threshold, f: StateFormula) -> Self {
        StateFormula::BlackBox(q, std::boxed::Box::new(f))
    }
    pub fn circ(q: Threshold, f: StateFormula) -> Self {
        StateFormula::Circ(q, std::boxed::Box::new(f))
    }
    pub fn tri(q: Threshold, f: StateFormula) -> Self {
        StateFormula::Tri(q, std::boxed::Box::new(f))
    }

    /// All atom names occurring in the formula.
    pub fn atoms(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            StateFormula::Atom(p) => out.push(p),
            StateFormula::Not(f) => f.collect_atoms(out),
            StateFormula::And(a, b) | StateFormula::Or(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            StateFormula::Box(_, f)
            | StateFormula::BlackBox(_, f)
            | StateFormula::Circ(_, f)
            | StateFormula::Tri(_, f) => f.collect_atoms(out),
        }
    }

    /// Maximum nesting depth of modal operators.
    pub fn modal_depth(&self) -> usize {
        match self {
            StateFormula::Atom(_) => 0,
            StateFormula::Not(f) => f.modal_depth(),
            StateFormula::And(a, b) | StateFormula::Or(a, b) => {
                a.modal_depth().max(b.modal_depth())
            }
            StateFormula::Box(_, f)
            | StateFormula::BlackBox(_, f)
            | StateFormula::Circ(_, f)
            | StateFormula::Tri(_, f) => 1 + f.modal_depth(),
        }
    }

    /// True when the formula mentions `BBOX` or `TRI`, which need a target
    /// distribution to evaluate.
    pub fn needs_distribution(&self) -> bool {
        match self {
            StateFormula::Atom(_) => false,
            StateFormula::Not(f) => f.needs_distribution(),
            StateFormula::And(a, b) | StateFormula::Or(a, b) => {
                a.needs_distribution() || b.needs_distribution()
            }
            StateFormula::BlackBox(..) | StateFormula::Tri(..) => true,
            StateFormula::Box(_, f) | StateFormula::Circ(_, f) => f.needs_distribution(),
        }
    }
}

impl PathFormula {
    pub fn nabla(q: Threshold, f: StateFormula) -> Self {
        PathFormula::Nabla(q, f)
    }
    pub fn dagger(q: Threshold, f: StateFormula) -> Self {
        PathFormula::Dagger(q, f)
    }

    pub fn atoms(&self) -> Vec<&str> {
        match self {
            PathFormula::Nabla(_, f) | PathFormula::Dagger(_, f) => f.atoms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Number(String),
    Slash,
    LParen,
    RParen,
}

struct Lexer {
    tokens: Vec<(Tok, usize)>,
    end: usize,
}

fn lex(text: &str) -> Result<Lexer, FormulaError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == '(' {
            tokens.push((Tok::LParen, i));
            i += 1;
        } else if c == ')' {
            tokens.push((Tok::RParen, i));
            i += 1;
        } else if c == '/' {
            tokens.push((Tok::Slash, i));
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            tokens.push((Tok::Number(text[start..i].to_string()), start));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_ascii_alphanumeric() || c == '_' {
                    i += 1;
                } else {
                    break;
                }
            }
            tokens.push((Tok::Word(text[start..i].to_string()), start));
        } else {
            return Err(FormulaError::Syntax {
                position: i,
                expected: "token".to_string(),
            });
        }
    }
    Ok(Lexer {
        tokens,
        end: text.len(),
    })
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: &str) -> FormulaError {
        FormulaError::Syntax {
            position: self.position(),
            expected: expected.to_string(),
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(s)) if s == w)
    }

    fn rational(&mut self) -> Result<Threshold, FormulaError> {
        let num = match self.peek() {
            Some(Tok::Number(n)) => n.clone(),
            _ => return Err(self.err("rational threshold")),
        };
        self.pos += 1;
        let numer = BigInt::from_str(&num).expect("lexer produced digits");
        let value = if matches!(self.peek(), Some(Tok::Slash)) {
            self.pos += 1;
            let den = match self.peek() {
                Some(Tok::Number(n)) => n.clone(),
                _ => return Err(self.err("denominator")),
            };
            self.pos += 1;
            let denom = BigInt::from_str(&den).expect("lexer produced digits");
            if denom.is_zero() {
                return Err(FormulaError::ZeroDenominator);
            }
            BigRational::new(numer, denom)
        } else {
            BigRational::from_integer(numer)
        };
        Threshold::new(value)
    }

    fn state(&mut self) -> Result<StateFormula, FormulaError> {
        self.or_formula()
    }

    fn or_formula(&mut self) -> Result<StateFormula, FormulaError> {
        let mut lhs = self.and_formula()?;
        while self.is_word("OR") {
            self.pos += 1;
            let rhs = self.and_formula()?;
            lhs = StateFormula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_formula(&mut self) -> Result<StateFormula, FormulaError> {
        let mut lhs = self.unary()?;
        while self.is_word("AND") {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = StateFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<StateFormula, FormulaError> {
        match self.peek() {
            Some(Tok::Word(w)) => match w.as_str() {
                "NOT" => {
                    self.pos += 1;
                    Ok(StateFormula::not(self.unary()?))
                }
                "BOX" | "BBOX" | "CIRC" | "TRI" => {
                    let op = w.clone();
                    self.pos += 1;
                    let q = self.rational()?;
                    let arg = self.unary()?;
                    Ok(match op.as_str() {
                        "BOX" => StateFormula::boxed(q, arg),
                        "BBOX" => StateFormula::black_box(q, arg),
                        "CIRC" => StateFormula::circ(q, arg),
                        _ => StateFormula::tri(q, arg),
                    })
                }
                "NAB" | "DAG" | "AND" | "OR" => Err(self.err("formula")),
                _ => {
                    let name = w.clone();
                    self.pos += 1;
                    Ok(StateFormula::Atom(name))
                }
            },
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.state()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(self.err("`)`")),
                }
            }
            _ => Err(self.err("formula")),
        }
    }

    fn formula(&mut self) -> Result<Formula, FormulaError> {
        if self.is_word("NAB") || self.is_word("DAG") {
            let op = match self.peek() {
                Some(Tok::Word(w)) => w.clone(),
                _ => unreachable!(),
            };
            self.pos += 1;
            let q = self.rational()?;
            let arg = self.state()?;
            Ok(Formula::Path(if op == "NAB" {
                PathFormula::Nabla(q, arg)
            } else {
                PathFormula::Dagger(q, arg)
            }))
        } else {
            Ok(Formula::State(self.state()?))
        }
    }
}

/// Parses a state or path formula from text.
pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    let lexer = lex(text)?;
    let mut parser = Parser {
        tokens: lexer.tokens,
        pos: 0,
        end: lexer.end,
    };
    let formula = parser.formula()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.err("end of input"));
    }
    Ok(formula)
}

/// Parses text that must denote a state formula.
pub fn parse_state_formula(text: &str) -> Result<StateFormula, FormulaError> {
    match parse_formula(text)? {
        Formula::State(f) => Ok(f),
        Formula::Path(_) => Err(FormulaError::Syntax {
            position: 0,
            expected: "state formula".to_string(),
        }),
    }
}

// Printer precedence: OR = 0, AND = 1, unary/modal/atom = 2. A subformula is
// parenthesised when its own level is below what its slot requires, which is
// exactly what the round-trip law needs (left operands of the binary
// connectives may keep their own level; right operands must be one tighter).
fn level(f: &StateFormula) -> u8 {
    match f {
        StateFormula::Or(..) => 0,
        StateFormula::And(..) => 1,
        _ => 2,
    }
}

fn write_state(f: &StateFormula, min_level: u8, out: &mut String) {
    let needs_parens = level(f) < min_level;
    if needs_parens {
        out.push('(');
    }
    match f {
        StateFormula::Atom(p) => out.push_str(p),
        StateFormula::Not(inner) => {
            out.push_str("NOT ");
            write_state(inner, 2, out);
        }
        StateFormula::And(a, b) => {
            write_state(a, 1, out);
            out.push_str(" AND ");
            write_state(b, 2, out);
        }
        StateFormula::Or(a, b) => {
            write_state(a, 0, out);
            out.push_str(" OR ");
            write_state(b, 1, out);
        }
        StateFormula::Box(q, inner)
        | StateFormula::BlackBox(q, inner)
        | StateFormula::Circ(q, inner)
        | StateFormula::Tri(q, inner) => {
            let kw = match f {
                StateFormula::Box(..) => "BOX",
                StateFormula::BlackBox(..) => "BBOX",
                StateFormula::Circ(..) => "CIRC",
                _ => "TRI",
            };
            out.push_str(kw);
            out.push(' ');
            out.push_str(&q.to_string());
            out.push(' ');
            write_state(inner, 2, out);
        }
    }
    if needs_parens {
        out.push(')');
    }
}

/// Canonical text form; `parse_formula(format_formula(f))` returns `f`.
pub fn format_formula(f: &Formula) -> String {
    match f {
        Formula::State(s) => s.to_string(),
        Formula::Path(p) => p.to_string(),
    }
}

impl fmt::Display for StateFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_state(self, 0, &mut out);
        write!(f, "{out}")
    }
}

impl fmt::Display for PathFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathFormula::Nabla(q, inner) => write!(f, "NAB {q} {inner}"),
            PathFormula::Dagger(q, inner) => write!(f, "DAG {q} {inner}"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_formula(self))
    }
}

impl FromStr for Formula {
    type Err = FormulaError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}
