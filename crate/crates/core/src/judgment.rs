//! Proposition-wise majority voting over an agenda of yes/no atoms tied
//! together by a logical constraint, and repair of inconsistent outcomes.
//!
//! Constraints use a small infix language: atom names, `!`, `&`, `|`, `<->`
//! and parentheses. Binary operators are left associative; `!` binds tightest,
//! then `&`, `|`, and `<->` loosest.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Agendas with more atoms are rejected; evaluation enumerates all assignments.
pub const MAX_ATOMS: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Formula {
    Atom(usize),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

impl Formula {
    /// Evaluates with atom `i` set to bit `i` of `assignment`.
    pub fn eval(&self, assignment: u32) -> bool {
        match self {
            Formula::Atom(i) => assignment >> i & 1 == 1,
            Formula::Not(f) => !f.eval(assignment),
            Formula::And(a, b) => a.eval(assignment) && b.eval(assignment),
            Formula::Or(a, b) => a.eval(assignment) || b.eval(assignment),
            Formula::Iff(a, b) => a.eval(assignment) == b.eval(assignment),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Not,
    And,
    Or,
    Iff,
    Open,
    Close,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '!' => {
                out.push(Token::Not);
                i += 1;
            }
            '&' => {
                out.push(Token::And);
                i += 1;
            }
            '|' => {
                out.push(Token::Or);
                i += 1;
            }
            '(' => {
                out.push(Token::Open);
                i += 1;
            }
            ')' => {
                out.push(Token::Close);
                i += 1;
            }
            '<' if chars.get(i + 1) == Some(&'-') && chars.get(i + 2) == Some(&'>') => {
                out.push(Token::Iff);
                i += 3;
            }
            c if c.is_alphanumeric() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => {
                return Err(Error::InvalidAgenda(format!("unexpected character {other:?} in constraint")));
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    atoms: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn binary(
        &mut self,
        op: Token,
        next: fn(&mut Self) -> Result<Formula>,
        make: fn(Box<Formula>, Box<Formula>) -> Formula,
    ) -> Result<Formula> {
        let mut lhs = next(self)?;
        while self.peek() == Some(&op) {
            self.pos += 1;
            let rhs = next(self)?;
            lhs = make(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn iff(&mut self) -> Result<Formula> {
        self.binary(Token::Iff, Self::or, Formula::Iff)
    }

    fn or(&mut self) -> Result<Formula> {
        self.binary(Token::Or, Self::and, Formula::Or)
    }

    fn and(&mut self) -> Result<Formula> {
        self.binary(Token::And, Self::unary, Formula::And)
    }

    fn unary(&mut self) -> Result<Formula> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(Formula::Not(Box::new(self.unary()?)))
            }
            Some(Token::Open) => {
                self.pos += 1;
                let inner = self.iff()?;
                if self.peek() != Some(&Token::Close) {
                    return Err(Error::InvalidAgenda("missing ')' in constraint".into()));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                let i = self
                    .atoms
                    .iter()
                    .position(|a| *a == name)
                    .ok_or_else(|| Error::InvalidAgenda(format!("constraint mentions unknown atom {name:?}")))?;
                Ok(Formula::Atom(i))
            }
            other => Err(Error::InvalidAgenda(format!("unexpected {other:?} in constraint"))),
        }
    }
}

pub fn parse_formula(src: &str, atoms: &[String]) -> Result<Formula> {
    let mut parser = Parser {
        tokens: tokenize(src)?,
        pos: 0,
        atoms,
    };
    let f = parser.iff()?;
    if parser.pos != parser.tokens.len() {
        return Err(Error::InvalidAgenda(format!("trailing input in constraint {src:?}")));
    }
    Ok(f)
}

/// Ordered propositions plus a satisfiable constraint over them.
#[derive(Clone, Debug, PartialEq)]
pub struct Agenda {
    atoms: Vec<String>,
    constraint_src: String,
    constraint: Formula,
}

#[derive(Serialize, Deserialize)]
struct AgendaJson {
    atoms: Vec<String>,
    constraint: String,
}

impl Agenda {
    pub fn new(atoms: Vec<String>, constraint: &str) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidAgenda("agenda has no atoms".into()));
        }
        if atoms.len() > MAX_ATOMS {
            return Err(Error::InvalidAgenda(format!("{} atoms exceed the limit of {MAX_ATOMS}", atoms.len())));
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.is_empty() || !a.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return Err(Error::InvalidAgenda(format!("invalid atom name {a:?}")));
            }
            if atoms[..i].contains(a) {
                return Err(Error::InvalidAgenda(format!("duplicate atom {a:?}")));
            }
        }
        let formula = parse_formula(constraint, &atoms)?;
        let agenda = Agenda {
            atoms,
            constraint_src: constraint.to_string(),
            constraint: formula,
        };
        if !(0..agenda.assignment_count()).any(|x| agenda.constraint.eval(x)) {
            return Err(Error::InvalidAgenda("constraint is unsatisfiable".into()));
        }
        Ok(agenda)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: AgendaJson = serde_json::from_str(text).map_err(|e| Error::InvalidAgenda(e.to_string()))?;
        Agenda::new(raw.atoms, &raw.constraint)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&AgendaJson {
            atoms: self.atoms.clone(),
            constraint: self.constraint_src.clone(),
        })
        .expect("agenda serializes")
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn constraint(&self) -> &Formula {
        &self.constraint
    }

    fn assignment_count(&self) -> u32 {
        1u32 << self.atoms.len()
    }

    /// Builds a judgment set from values in agenda order.
    pub fn judgment(&self, values: &[bool]) -> Result<JudgmentSet> {
        if values.len() != self.atoms.len() {
            return Err(Error::AtomMismatch(format!("{} values for {} atoms", values.len(), self.atoms.len())));
        }
        Ok(JudgmentSet {
            values: self.atoms.iter().cloned().zip(values.iter().copied()).collect(),
        })
    }

    fn encode(&self, js: &JudgmentSet) -> Result<u32> {
        if js.values.len() != self.atoms.len() {
            return Err(Error::AtomMismatch(format!(
                "judgment set covers {} atoms, agenda has {}",
                js.values.len(),
                self.atoms.len()
            )));
        }
        let mut bits = 0u32;
        for (i, a) in self.atoms.iter().enumerate() {
            match js.values.get(a) {
                Some(true) => bits |= 1 << i,
                Some(false) => {}
                None => return Err(Error::AtomMismatch(format!("no judgment on {a:?}"))),
            }
        }
        Ok(bits)
    }

    fn decode(&self, bits: u32) -> JudgmentSet {
        JudgmentSet {
            values: self.atoms.iter().enumerate().map(|(i, a)| (a.clone(), bits >> i & 1 == 1)).collect(),
        }
    }
}

impl fmt::Display for Agenda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.atoms.join(", "), self.constraint_src)
    }
}

/// Yes/no judgments on every atom of an agenda.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JudgmentSet {
    pub values: BTreeMap<String, bool>,
}

impl JudgmentSet {
    pub fn get(&self, atom: &str) -> Option<bool> {
        self.values.get(atom).copied()
    }

    /// Values listed in agenda order.
    pub fn in_order(&self, agenda: &Agenda) -> Vec<bool> {
        agenda.atoms.iter().map(|a| self.values.get(a).copied().unwrap_or(false)).collect()
    }

    pub fn hamming(&self, other: &JudgmentSet) -> usize {
        self.values.iter().filter(|(k, v)| other.values.get(*k) != Some(v)).count()
    }
}

/// Individually consistent judgment sets, one per evaluator.
#[derive(Clone, Debug, PartialEq)]
pub struct JudgmentProfile {
    agenda: Agenda,
    entries: Vec<(String, JudgmentSet)>,
}

#[derive(Deserialize)]
struct JudgmentEntryJson {
    evaluator: String,
    judgments: BTreeMap<String, bool>,
}

impl JudgmentProfile {
    pub fn new(agenda: Agenda, entries: Vec<(String, JudgmentSet)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyEvaluators);
        }
        for (e, js) in &entries {
            if !check_consistency(js, &agenda)? {
                return Err(Error::InvalidAgenda(format!("judgments of {e} violate the constraint")));
            }
        }
        Ok(JudgmentProfile { agenda, entries })
    }

    /// Reads `[{"evaluator": "E1", "judgments": {"safe": true, ...}}, ...]`.
    pub fn from_json(agenda: Agenda, text: &str) -> Result<Self> {
        let raw: Vec<JudgmentEntryJson> = serde_json::from_str(text).map_err(|e| Error::AtomMismatch(e.to_string()))?;
        let entries = raw
            .into_iter()
            .map(|e| (e.evaluator, JudgmentSet { values: e.judgments }))
            .collect();
        JudgmentProfile::new(agenda, entries)
    }

    pub fn agenda(&self) -> &Agenda {
        &self.agenda
    }

    pub fn entries(&self) -> &[(String, JudgmentSet)] {
        &self.entries
    }

    pub fn permuted(&self, order: &[usize]) -> JudgmentProfile {
        JudgmentProfile {
            agenda: self.agenda.clone(),
            entries: order.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }
}

/// Atom-by-atom strict majority. Requires an odd number of evaluators.
pub fn majority_judgments(jp: &JudgmentProfile) -> Result<JudgmentSet> {
    let n = jp.entries.len();
    if n.is_multiple_of(2) {
        return Err(Error::EvenEvaluators(n));
    }
    let values = jp
        .agenda
        .atoms
        .iter()
        .map(|a| {
            let yes = jp.entries.iter().filter(|(_, js)| js.get(a) == Some(true)).count();
            (a.clone(), 2 * yes > n)
        })
        .collect();
    Ok(JudgmentSet { values })
}

pub fn check_consistency(js: &JudgmentSet, agenda: &Agenda) -> Result<bool> {
    Ok(agenda.constraint.eval(agenda.encode(js)?))
}

/// A consistent judgment set at minimum Hamming distance from `js`. Among
/// equally close repairs, the one flipping later agenda atoms is preferred
/// (compared from the last atom backwards).
pub fn closest_consistent(js: &JudgmentSet, agenda: &Agenda) -> Result<(JudgmentSet, usize)> {
    let original = agenda.encode(js)?;
    let best = (0..agenda.assignment_count())
        .filter(|&x| agenda.constraint.eval(x))
        .map(|x| {
            let flips = x ^ original;
            // Same popcount: a larger flip mask means later atoms are flipped.
            (std::cmp::Reverse(flips.count_ones()), flips, x)
        })
        .max()
        .map(|(_, _, x)| x)
        .expect("agenda constraint is satisfiable");
    Ok((agenda.decode(best), (best ^ original).count_ones() as usize))
}
