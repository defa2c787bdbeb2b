//! Heterogeneous evaluator feedback in a small line-oriented grammar,
//! compiled to a partial preference and interpreted as ratings.
//!
//! ```text
//! approve ID
//! disapprove ID
//! ID > ID
//! rank ID > ID (> ID)*
//! rate ID = NUM
//! I rate ID between NUM and NUM
//! ```
//!
//! Keywords are case-insensitive, ids are not. Lines starting with `#` and
//! blank lines are skipped. Anything else is rejected rather than guessed at.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::cardinal::{SCALE_MAX, SCALE_MID, SCALE_MIN};
use crate::error::{Error, ParseError, Result};
use crate::profile::Alternative;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackStatement {
    Approve { alternative: Alternative },
    Disapprove { alternative: Alternative },
    Pairwise { better: Alternative, worse: Alternative },
    Ranking { order: Vec<Alternative> },
    IntervalRating { alternative: Alternative, lo: f64, hi: f64 },
    PointRating { alternative: Alternative, value: f64 },
}

impl fmt::Display for FeedbackStatement {
    /// Canonical statement text; `parse_feedback` reads it back unchanged.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackStatement::Approve { alternative } => write!(f, "approve {alternative}"),
            FeedbackStatement::Disapprove { alternative } => write!(f, "disapprove {alternative}"),
            FeedbackStatement::Pairwise { better, worse } => write!(f, "{better} > {worse}"),
            FeedbackStatement::Ranking { order } => {
                let ids: Vec<&str> = order.iter().map(Alternative::as_str).collect();
                write!(f, "rank {}", ids.join(" > "))
            }
            FeedbackStatement::IntervalRating { alternative, lo, hi } => {
                write!(f, "I rate {alternative} between {lo} and {hi}")
            }
            FeedbackStatement::PointRating { alternative, value } => write!(f, "rate {alternative} = {value}"),
        }
    }
}

pub fn format_statement(s: &FeedbackStatement) -> String {
    s.to_string()
}

/// Splits a line into words, with `>` and `=` always standing alone.
fn words(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in line.chars() {
        if c.is_whitespace() || c == '>' || c == '=' {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn is_kw(word: &str, kw: &str) -> bool {
    word.eq_ignore_ascii_case(kw)
}

struct LineCtx<'a> {
    line: usize,
    context: &'a [Alternative],
}

impl LineCtx<'_> {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, msg)
    }

    fn alt(&self, word: &str) -> Result<Alternative, ParseError> {
        self.context
            .iter()
            .find(|a| a.as_str() == word)
            .cloned()
            .ok_or_else(|| self.err(format!("unknown alternative {word:?}")))
    }

    fn num(&self, word: &str) -> Result<f64, ParseError> {
        let valid = !word.is_empty()
            && word.chars().all(|c| c.is_ascii_digit() || c == '.')
            && word.chars().filter(|&c| c == '.').count() <= 1
            && word.chars().next().is_some_and(|c| c.is_ascii_digit())
            && !word.ends_with('.');
        let value: f64 = if valid { word.parse().ok() } else { None }.ok_or_else(|| self.err(format!("invalid number {word:?}")))?;
        if !(SCALE_MIN..=SCALE_MAX).contains(&value) {
            return Err(self.err(format!("rating {word} is off the 0..10 scale")));
        }
        Ok(value)
    }

    /// `ID > ID > ...` starting at `words[0]`.
    fn chain(&self, words: &[String]) -> Result<Vec<Alternative>, ParseError> {
        if words.len() < 3 || words.len().is_multiple_of(2) {
            return Err(self.err("expected `ID > ID (> ID)*`"));
        }
        let mut out = Vec::new();
        for (k, w) in words.iter().enumerate() {
            if k % 2 == 1 {
                if w != ">" {
                    return Err(self.err(format!("expected '>' but found {w:?}")));
                }
                continue;
            }
            let a = self.alt(w)?;
            if out.contains(&a) {
                return Err(self.err(format!("alternative {a} appears twice")));
            }
            out.push(a);
        }
        Ok(out)
    }

    fn statement(&self, w: &[String]) -> Result<FeedbackStatement, ParseError> {
        let first = w[0].as_str();
        if is_kw(first, "approve") || is_kw(first, "disapprove") {
            if w.len() != 2 {
                return Err(self.err(format!("expected `{first} ID`")));
            }
            let alternative = self.alt(&w[1])?;
            return Ok(if is_kw(first, "approve") {
                FeedbackStatement::Approve { alternative }
            } else {
                FeedbackStatement::Disapprove { alternative }
            });
        }
        if is_kw(first, "rank") {
            return Ok(FeedbackStatement::Ranking { order: self.chain(&w[1..])? });
        }
        if is_kw(first, "rate") {
            if w.len() != 4 || w[2] != "=" {
                return Err(self.err("expected `rate ID = NUM`"));
            }
            return Ok(FeedbackStatement::PointRating {
                alternative: self.alt(&w[1])?,
                value: self.num(&w[3])?,
            });
        }
        if is_kw(first, "i") && w.len() > 1 && is_kw(&w[1], "rate") {
            if w.len() != 7 || !is_kw(&w[3], "between") || !is_kw(&w[5], "and") {
                return Err(self.err("expected `I rate ID between NUM and NUM`"));
            }
            let alternative = self.alt(&w[2])?;
            let lo = self.num(&w[4])?;
            let hi = self.num(&w[6])?;
            if lo > hi {
                return Err(self.err(format!("interval lower bound {lo} exceeds upper bound {hi}")));
            }
            return Ok(FeedbackStatement::IntervalRating { alternative, lo, hi });
        }
        if w.len() == 3 && w[1] == ">" {
            let order = self.chain(w)?;
            return Ok(FeedbackStatement::Pairwise {
                better: order[0].clone(),
                worse: order[1].clone(),
            });
        }
        Err(self.err("unrecognized feedback statement"))
    }
}

/// Parses one statement per line against the alternatives in `context`.
pub fn parse_feedback(text: &str, context: &[Alternative]) -> Result<Vec<FeedbackStatement>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ctx = LineCtx { line: i + 1, context };
        out.push(ctx.statement(&words(line))?);
    }
    Ok(out)
}

/// Numeric meaning of approvals, applied as rating bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ApprovalBounds {
    pub approve: (f64, f64),
    pub disapprove: (f64, f64),
}

impl Default for ApprovalBounds {
    fn default() -> Self {
        ApprovalBounds {
            approve: (8.0, 10.0),
            disapprove: (0.0, 2.0),
        }
    }
}

/// Transitively closed strict order plus per-alternative rating intervals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartialPreference {
    pub strict_order: BTreeSet<(Alternative, Alternative)>,
    pub bounds: BTreeMap<Alternative, (f64, f64)>,
}

impl PartialPreference {
    pub fn prefers(&self, better: &str, worse: &str) -> bool {
        self.strict_order.iter().any(|(b, w)| b.as_str() == better && w.as_str() == worse)
    }
}

pub fn compile_constraints(stmts: &[FeedbackStatement]) -> Result<PartialPreference> {
    compile_constraints_with(stmts, ApprovalBounds::default())
}

pub fn compile_constraints_with(stmts: &[FeedbackStatement], approval: ApprovalBounds) -> Result<PartialPreference> {
    // Direct order edges and the statement numbers (1-based) that asserted them.
    let mut edges: BTreeMap<(Alternative, Alternative), Vec<usize>> = BTreeMap::new();
    let mut bounds: BTreeMap<Alternative, ((f64, f64), Vec<usize>)> = BTreeMap::new();

    let mut bound = |a: &Alternative, lo: f64, hi: f64, k: usize| -> Result<()> {
        let entry = bounds.entry(a.clone()).or_insert(((SCALE_MIN, SCALE_MAX), Vec::new()));
        entry.0 = (entry.0 .0.max(lo), entry.0 .1.min(hi));
        entry.1.push(k);
        if entry.0 .0 > entry.0 .1 {
            return Err(Error::InconsistentFeedback(format!(
                "rating bounds for {a} have an empty intersection (statements {})",
                join_numbers(&entry.1)
            )));
        }
        Ok(())
    };

    for (k, s) in stmts.iter().enumerate() {
        let k = k + 1;
        match s {
            FeedbackStatement::Approve { alternative } => bound(alternative, approval.approve.0, approval.approve.1, k)?,
            FeedbackStatement::Disapprove { alternative } => {
                bound(alternative, approval.disapprove.0, approval.disapprove.1, k)?
            }
            FeedbackStatement::IntervalRating { alternative, lo, hi } => bound(alternative, *lo, *hi, k)?,
            FeedbackStatement::PointRating { alternative, value } => bound(alternative, *value, *value, k)?,
            FeedbackStatement::Pairwise { better, worse } => {
                edges.entry((better.clone(), worse.clone())).or_default().push(k);
            }
            FeedbackStatement::Ranking { order } => {
                for pair in order.windows(2) {
                    edges.entry((pair[0].clone(), pair[1].clone())).or_default().push(k);
                }
            }
        }
    }

    let strict_order = transitive_closure(&edges)?;

    let bounds: BTreeMap<Alternative, (f64, f64)> = bounds.into_iter().map(|(a, (b, _))| (a, b)).collect();
    for (better, worse) in &strict_order {
        if let (Some(&(_, b_hi)), Some(&(w_lo, _))) = (bounds.get(better), bounds.get(worse)) {
            if b_hi < w_lo {
                return Err(Error::InconsistentFeedback(format!(
                    "{better} is preferred to {worse} but rated at most {b_hi} against at least {w_lo}"
                )));
            }
        }
    }
    Ok(PartialPreference { strict_order, bounds })
}

fn join_numbers(ks: &[usize]) -> String {
    ks.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
}

fn transitive_closure(
    edges: &BTreeMap<(Alternative, Alternative), Vec<usize>>,
) -> Result<BTreeSet<(Alternative, Alternative)>> {
    let nodes: Vec<Alternative> = edges
        .keys()
        .flat_map(|(a, b)| [a.clone(), b.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = nodes.len();
    let idx = |a: &Alternative| nodes.binary_search(a).expect("node collected from edges");
    let mut reach = vec![vec![false; n]; n];
    for (a, b) in edges.keys() {
        reach[idx(a)][idx(b)] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    if let Some(i) = (0..n).find(|&i| reach[i][i]) {
        // Name the statements behind the direct edges lying on a cycle through i.
        let mut involved: BTreeSet<usize> = BTreeSet::new();
        for ((a, b), ks) in edges {
            let (ia, ib) = (idx(a), idx(b));
            if (ia == i || reach[i][ia]) && (ib == i || reach[ib][i]) && reach[ia][ia] {
                involved.extend(ks);
            }
        }
        return Err(Error::InconsistentFeedback(format!(
            "cyclic preferences through {} (statements {})",
            nodes[i],
            join_numbers(&involved.into_iter().collect::<Vec<_>>())
        )));
    }
    let mut closure = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if reach[i][j] {
                closure.insert((nodes[i].clone(), nodes[j].clone()));
            }
        }
    }
    Ok(closure)
}

/// Rating implied by a partial preference: interval midpoint when bounded,
/// otherwise the share of order-comparable alternatives that `y` beats, scaled
/// to `[0, 10]`, otherwise the scale midpoint.
pub fn interpret_rating(pp: &PartialPreference, y: &Alternative) -> f64 {
    if let Some(&(lo, hi)) = pp.bounds.get(y) {
        return (lo + hi) / 2.0;
    }
    let beats = pp.strict_order.iter().filter(|(b, _)| b == y).count();
    let beaten_by = pp.strict_order.iter().filter(|(_, w)| w == y).count();
    if beats + beaten_by == 0 {
        return SCALE_MID;
    }
    SCALE_MAX * beats as f64 / (beats + beaten_by) as f64
}
