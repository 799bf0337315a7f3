//! Real-time temporal logic formulas: AST, concrete syntax, negation normal
//! form and ε-robustification.
//!
//! Concrete syntax, tightest binding first:
//!
//! ```text
//! !φ   <>φ   []φ          negation, eventually, always
//! φ U ψ   φ R ψ          until, release (right-associative)
//! φ & ψ                  conjunction (left-associative)
//! φ | ψ                  disjunction (left-associative)
//! ```
//!
//! Atoms match `[A-Za-z][A-Za-z0-9_]*`; `true`, `false`, `U` and `R` are
//! reserved.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::regions::{Region, RegionError};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Release(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
}

impl Formula {
    pub fn atom(name: impl Into<String>) -> Self {
        Formula::Atom(name.into())
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

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn release(a: Formula, b: Formula) -> Self {
        Formula::Release(Box::new(a), Box::new(b))
    }

    pub fn eventually(a: Formula) -> Self {
        Formula::Eventually(Box::new(a))
    }

    pub fn always(a: Formula) -> Self {
        Formula::Always(Box::new(a))
    }

    /// True when every negation sits directly on an atom.
    pub fn is_nnf(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::Not(inner) => matches!(**inner, Formula::Atom(_)),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) | Formula::Release(a, b) => {
                a.is_nnf() && b.is_nnf()
            }
            Formula::Eventually(a) | Formula::Always(a) => a.is_nnf(),
        }
    }

    /// Names of all atoms in the formula.
    pub fn atoms(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(name) => {
                out.insert(name);
            }
            Formula::Not(a) | Formula::Eventually(a) | Formula::Always(a) => a.collect_atoms(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) | Formula::Release(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// Node-kind skeleton with atom names erased.
    pub fn skeleton(&self) -> String {
        match self {
            Formula::True => "T".into(),
            Formula::False => "F".into(),
            Formula::Atom(_) => "a".into(),
            Formula::Not(a) => format!("!{}", a.skeleton()),
            Formula::Eventually(a) => format!("E{}", a.skeleton()),
            Formula::Always(a) => format!("G{}", a.skeleton()),
            Formula::And(a, b) => format!("({}&{})", a.skeleton(), b.skeleton()),
            Formula::Or(a, b) => format!("({}|{})", a.skeleton(), b.skeleton()),
            Formula::Until(a, b) => format!("({}U{})", a.skeleton(), b.skeleton()),
            Formula::Release(a, b) => format!("({}R{})", a.skeleton(), b.skeleton()),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 0,
            Formula::Not(a) | Formula::Eventually(a) | Formula::Always(a) => 1 + a.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) | Formula::Release(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(name) => write!(f, "{name}"),
            Formula::Not(a) => write!(f, "!{a}"),
            Formula::Eventually(a) => write!(f, "<>{a}"),
            Formula::Always(a) => write!(f, "[]{a}"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Until(a, b) => write!(f, "({a} U {b})"),
            Formula::Release(a, b) => write!(f, "({a} R {b})"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RtlError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" | "))]
    Syntax { offset: usize, expected: Vec<String>, found: String },
    #[error("unknown operator {text:?} at byte {offset}")]
    UnknownOperator { offset: usize, text: String },
    #[error("formula is not in negation normal form")]
    NotNnf,
    #[error("unknown atom {0:?}")]
    UnknownAtom(String),
    #[error("robust region for atom {atom:?} is empty (eps {eps} ≥ inner radius {radius})")]
    EmptyRobustRegion { atom: String, eps: f64, radius: f64 },
    #[error("epsilon must be finite and ≥ 0, got {0}")]
    BadEpsilon(f64),
    #[error("region of atom {atom:?}: {source}")]
    Region { atom: String, source: RegionError },
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    LParen,
    RParen,
    Not,
    And,
    Or,
    Eventually,
    Always,
    Until,
    Release,
    True,
    False,
    Ident(String),
    End,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::LParen => "'('".into(),
            Token::RParen => "')'".into(),
            Token::Not => "'!'".into(),
            Token::And => "'&'".into(),
            Token::Or => "'|'".into(),
            Token::Eventually => "'<>'".into(),
            Token::Always => "'[]'".into(),
            Token::Until => "'U'".into(),
            Token::Release => "'R'".into(),
            Token::True => "'true'".into(),
            Token::False => "'false'".into(),
            Token::Ident(name) => format!("atom {name:?}"),
            Token::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>, RtlError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'!' => Token::Not,
            b'&' => Token::And,
            b'|' => Token::Or,
            b'<' if bytes.get(i + 1) == Some(&b'>') => {
                i += 1;
                Token::Eventually
            }
            b'[' if bytes.get(i + 1) == Some(&b']') => {
                i += 1;
                Token::Always
            }
            c if c.is_ascii_alphabetic() => {
                while i + 1 < bytes.len() && (bytes[i + 1].is_ascii_alphanumeric() || bytes[i + 1] == b'_') {
                    i += 1;
                }
                match &text[start..=i] {
                    "U" => Token::Until,
                    "R" => Token::Release,
                    "true" => Token::True,
                    "false" => Token::False,
                    name => Token::Ident(name.to_string()),
                }
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                let mut end = start + ch.len_utf8();
                // Swallow the rest of a multi-character operator for the message.
                while end < text.len() {
                    let next = text[end..].chars().next().unwrap();
                    if next.is_ascii_punctuation() && !"()!&|".contains(next) {
                        end += next.len_utf8();
                    } else {
                        break;
                    }
                }
                return Err(RtlError::UnknownOperator { offset: start, text: text[start..end].to_string() });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((text.len(), Token::End));
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].1
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].0
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos].1.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, expected: &[&str]) -> RtlError {
        RtlError::Syntax {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn disjunction(&mut self) -> Result<Formula, RtlError> {
        let mut lhs = self.conjunction()?;
        while *self.peek() == Token::Or {
            self.bump();
            lhs = Formula::or(lhs, self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, RtlError> {
        let mut lhs = self.temporal()?;
        while *self.peek() == Token::And {
            self.bump();
            lhs = Formula::and(lhs, self.temporal()?);
        }
        Ok(lhs)
    }

    fn temporal(&mut self) -> Result<Formula, RtlError> {
        let lhs = self.unary()?;
        match self.peek() {
            Token::Until => {
                self.bump();
                Ok(Formula::until(lhs, self.temporal()?))
            }
            Token::Release => {
                self.bump();
                Ok(Formula::release(lhs, self.temporal()?))
            }
            _ => Ok(lhs),
        }
    }

    fn unary(&mut self) -> Result<Formula, RtlError> {
        match self.peek() {
            Token::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Token::Eventually => {
                self.bump();
                Ok(Formula::eventually(self.unary()?))
            }
            Token::Always => {
                self.bump();
                Ok(Formula::always(self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, RtlError> {
        match self.peek().clone() {
            Token::True => {
                self.bump();
                Ok(Formula::True)
            }
            Token::False => {
                self.bump();
                Ok(Formula::False)
            }
            Token::Ident(name) => {
                self.bump();
                Ok(Formula::Atom(name))
            }
            Token::LParen => {
                self.bump();
                let inner = self.disjunction()?;
                if *self.peek() != Token::RParen {
                    return Err(self.error(&["')'", "'&'", "'|'", "'U'", "'R'"]));
                }
                self.bump();
                Ok(inner)
            }
            _ => Err(self.error(&["atom", "'true'", "'false'", "'('", "'!'", "'<>'", "'[]'"])),
        }
    }
}

/// Parses the concrete formula syntax.
pub fn parse(text: &str) -> Result<Formula, RtlError> {
    let mut parser = Parser { tokens: lex(text)?, pos: 0 };
    let formula = parser.disjunction()?;
    if *parser.peek() != Token::End {
        return Err(parser.error(&["'&'", "'|'", "'U'", "'R'", "end of input"]));
    }
    Ok(formula)
}

/// Pushes negations down to the atoms.
pub fn to_nnf(f: &Formula) -> Formula {
    match f {
        Formula::True | Formula::False | Formula::Atom(_) => f.clone(),
        Formula::Not(inner) => negate(inner),
        Formula::And(a, b) => Formula::and(to_nnf(a), to_nnf(b)),
        Formula::Or(a, b) => Formula::or(to_nnf(a), to_nnf(b)),
        Formula::Until(a, b) => Formula::until(to_nnf(a), to_nnf(b)),
        Formula::Release(a, b) => Formula::release(to_nnf(a), to_nnf(b)),
        Formula::Eventually(a) => Formula::eventually(to_nnf(a)),
        Formula::Always(a) => Formula::always(to_nnf(a)),
    }
}

/// NNF of `¬f`.
fn negate(f: &Formula) -> Formula {
    match f {
        Formula::True => Formula::False,
        Formula::False => Formula::True,
        Formula::Atom(_) => Formula::not(f.clone()),
        Formula::Not(inner) => to_nnf(inner),
        Formula::And(a, b) => Formula::or(negate(a), negate(b)),
        Formula::Or(a, b) => Formula::and(negate(a), negate(b)),
        Formula::Until(a, b) => Formula::release(negate(a), negate(b)),
        Formula::Release(a, b) => Formula::until(negate(a), negate(b)),
        Formula::Eventually(a) => Formula::always(negate(a)),
        Formula::Always(a) => Formula::eventually(negate(a)),
    }
}

/// A labeled region; `projection` selects the state coordinates the region
/// constrains (all of them when `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct Proposition {
    pub label: String,
    pub region: Region,
    pub projection: Option<Vec<usize>>,
}

impl Proposition {
    pub fn new(label: impl Into<String>, region: Region) -> Self {
        Self { label: label.into(), region, projection: None }
    }

    pub fn with_projection(mut self, dims: Vec<usize>) -> Self {
        self.projection = Some(dims);
        self
    }

    /// Coordinates of `x` the region sees.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match &self.projection {
            Some(dims) => dims.iter().map(|&i| x[i]).collect(),
            None => x.to_vec(),
        }
    }

    /// Labeling function: the atom holds at `x` iff the region contains it.
    pub fn holds_at(&self, x: &[f64]) -> Result<bool, RegionError> {
        self.region.contains(&self.project(x))
    }

    fn with_region(&self, label: String, region: Region) -> Self {
        Self { label, region, projection: self.projection.clone() }
    }
}

/// Atom name → labeled region.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropositionTable {
    entries: BTreeMap<String, Proposition>,
}

impl PropositionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, prop: Proposition) {
        self.entries.insert(name.into(), prop);
    }

    pub fn get(&self, name: &str) -> Option<&Proposition> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Proposition)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fails with the first atom of `f` missing from the table.
    pub fn resolve(&self, f: &Formula) -> Result<(), RtlError> {
        match f.atoms().into_iter().find(|a| !self.contains(a)) {
            Some(missing) => Err(RtlError::UnknownAtom(missing.to_string())),
            None => Ok(()),
        }
    }

    fn fresh_name(&self, base: &str) -> String {
        if !self.contains(base) {
            return base.to_string();
        }
        (2..)
            .map(|i| format!("{base}{i}"))
            .find(|candidate| !self.contains(candidate))
            .expect("unbounded suffix search")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Polarity {
    Positive,
    Negative,
}

/// ε-robust rewrite of an NNF formula.
///
/// Positive atoms are rebound to ε-contracted regions and negated atoms to
/// ε-expanded ones. Derived propositions are added next to the originals, so
/// an atom occurring with both polarities gets two new entries.
pub fn robustify(
    f: &Formula,
    eps: f64,
    table: &PropositionTable,
) -> Result<(Formula, PropositionTable), RtlError> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(RtlError::BadEpsilon(eps));
    }
    if !f.is_nnf() {
        return Err(RtlError::NotNnf);
    }
    table.resolve(f)?;
    if eps == 0.0 {
        return Ok((f.clone(), table.clone()));
    }
    let mut out = table.clone();
    let mut renamed = HashMap::new();
    let rewritten = rewrite(f, eps, table, &mut out, &mut renamed, Polarity::Positive)?;
    Ok((rewritten, out))
}

fn rewrite(
    f: &Formula,
    eps: f64,
    src: &PropositionTable,
    out: &mut PropositionTable,
    renamed: &mut HashMap<(String, Polarity), String>,
    polarity: Polarity,
) -> Result<Formula, RtlError> {
    let mut recurse = |g: &Formula, pol| rewrite(g, eps, src, out, renamed, pol);
    Ok(match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Atom(name) => Formula::Atom(derive_atom(name, eps, src, out, renamed, polarity)?),
        Formula::Not(inner) => Formula::not(recurse(inner, Polarity::Negative)?),
        Formula::And(a, b) => Formula::and(recurse(a, Polarity::Positive)?, recurse(b, Polarity::Positive)?),
        Formula::Or(a, b) => Formula::or(recurse(a, Polarity::Positive)?, recurse(b, Polarity::Positive)?),
        Formula::Until(a, b) => {
            Formula::until(recurse(a, Polarity::Positive)?, recurse(b, Polarity::Positive)?)
        }
        Formula::Release(a, b) => {
            Formula::release(recurse(a, Polarity::Positive)?, recurse(b, Polarity::Positive)?)
        }
        Formula::Eventually(a) => Formula::eventually(recurse(a, Polarity::Positive)?),
        Formula::Always(a) => Formula::always(recurse(a, Polarity::Positive)?),
    })
}

fn derive_atom(
    name: &str,
    eps: f64,
    src: &PropositionTable,
    out: &mut PropositionTable,
    renamed: &mut HashMap<(String, Polarity), String>,
    polarity: Polarity,
) -> Result<String, RtlError> {
    if let Some(existing) = renamed.get(&(name.to_string(), polarity)) {
        return Ok(existing.clone());
    }
    let prop = src.get(name).ok_or_else(|| RtlError::UnknownAtom(name.to_string()))?;
    let region_err = |source| RtlError::Region { atom: name.to_string(), source };
    let (suffix, label, region) = match polarity {
        Polarity::Positive => {
            match prop.region.inner_radius() {
                Ok(radius) if eps >= radius => {
                    return Err(RtlError::EmptyRobustRegion { atom: name.to_string(), eps, radius })
                }
                Ok(_) | Err(RegionError::Unbounded) => {}
                Err(e) => return Err(region_err(e)),
            }
            let region = prop.region.contract(eps).map_err(region_err)?;
            ("_con", format!("{}^{eps}", prop.label), region)
        }
        Polarity::Negative => {
            let region = prop.region.expand(eps).map_err(region_err)?;
            ("_exp", format!("{}^-{eps}", prop.label), region)
        }
    };
    let fresh = out.fresh_name(&format!("{name}{suffix}"));
    out.insert(fresh.clone(), prop.with_region(label, region));
    renamed.insert((name.to_string(), polarity), fresh.clone());
    Ok(fresh)
}
