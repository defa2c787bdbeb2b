//! Alternatives, ranking ballots, ordinal profiles and the pairwise-majority
//! structure derived from them.
//!
//! The on-disk ballot format is line oriented:
//!
//! ```text
//! # comment
//! alternatives: A, B, C
//! 4: A > B > C
//! 9: B > C > A
//! ```
//!
//! Every ballot is a strict total order over the header's alternatives, with a
//! positive integer count in front. [`format_profile`] writes the canonical
//! form (single spaces, ballots in file order, comments dropped) and
//! [`parse_profile`] reads it back exactly.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};

/// Characters an alternative id may not contain, besides whitespace.
const RESERVED: &[char] = &['>', ',', '=', '#'];

/// A short identifier for one option being voted on.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Alternative(String);

impl Alternative {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(|c| c.is_whitespace() || RESERVED.contains(&c)) {
            return Err(Error::InvalidAlternative(id));
        }
        Ok(Alternative(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Alternative {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Alternative::new(value)
    }
}

impl From<Alternative> for String {
    fn from(value: Alternative) -> Self {
        value.0
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for Alternative {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// One ranking, held by `weight` identical voters. Positions index into the
/// owning profile's alternative list.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RankingBallot {
    pub ranking: Vec<usize>,
    pub weight: u64,
}

/// Strict rankings of a finite alternative set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrdinalProfile {
    alternatives: Vec<Alternative>,
    ballots: Vec<RankingBallot>,
    index: HashMap<Alternative, usize>,
    /// `lex_order[k]` is the alternative index with the k-th smallest id.
    lex_order: Vec<usize>,
    lex_rank: Vec<usize>,
}

impl OrdinalProfile {
    pub fn new(alternatives: Vec<Alternative>, ballots: Vec<RankingBallot>) -> Result<Self> {
        if alternatives.is_empty() {
            return Err(Error::InvalidProfile("at least one alternative is required".into()));
        }
        let mut index = HashMap::with_capacity(alternatives.len());
        for (i, a) in alternatives.iter().enumerate() {
            if index.insert(a.clone(), i).is_some() {
                return Err(Error::InvalidProfile(format!("duplicate alternative {a}")));
            }
        }
        let m = alternatives.len();
        if ballots.is_empty() {
            return Err(Error::InvalidProfile("at least one ballot is required".into()));
        }
        for b in &ballots {
            if b.weight == 0 {
                return Err(Error::InvalidProfile("ballot weight must be positive".into()));
            }
            check_permutation(&b.ranking, m).map_err(Error::InvalidProfile)?;
        }
        let mut lex_order: Vec<usize> = (0..m).collect();
        lex_order.sort_by(|&a, &b| alternatives[a].cmp(&alternatives[b]));
        let mut lex_rank = vec![0; m];
        for (k, &a) in lex_order.iter().enumerate() {
            lex_rank[a] = k;
        }
        Ok(OrdinalProfile {
            alternatives,
            ballots,
            index,
            lex_order,
            lex_rank,
        })
    }

    /// Builds a profile from plain ids, e.g. `from_ids(&["A","B"], &[(2, &["A","B"])])`.
    pub fn from_ids(alternatives: &[&str], ballots: &[(u64, &[&str])]) -> Result<Self> {
        let alts = alternatives
            .iter()
            .map(|a| Alternative::new(*a))
            .collect::<Result<Vec<_>>>()?;
        let lookup: HashMap<&str, usize> = alternatives.iter().enumerate().map(|(i, a)| (*a, i)).collect();
        let ballots = ballots
            .iter()
            .map(|(w, r)| {
                let ranking = r
                    .iter()
                    .map(|id| lookup.get(id).copied().ok_or_else(|| Error::UnknownAlternative(id.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                Ok(RankingBallot { ranking, weight: *w })
            })
            .collect::<Result<Vec<_>>>()?;
        OrdinalProfile::new(alts, ballots)
    }

    pub fn alternatives(&self) -> &[Alternative] {
        &self.alternatives
    }

    pub fn ballots(&self) -> &[RankingBallot] {
        &self.ballots
    }

    pub fn num_alternatives(&self) -> usize {
        self.alternatives.len()
    }

    /// Total voter count, the sum of ballot weights.
    pub fn num_voters(&self) -> u64 {
        self.ballots.iter().map(|b| b.weight).sum()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn alternative(&self, i: usize) -> &Alternative {
        &self.alternatives[i]
    }

    /// Position of alternative `i` when all ids are sorted ascending.
    pub fn lex_rank(&self, i: usize) -> usize {
        self.lex_rank[i]
    }

    /// Alternative indices sorted by id.
    pub fn lex_order(&self) -> &[usize] {
        &self.lex_order
    }

    pub fn ids(&self, indices: &[usize]) -> Vec<Alternative> {
        indices.iter().map(|&i| self.alternatives[i].clone()).collect()
    }

    /// The same profile with every ballot split into `weight` unit ballots.
    pub fn expanded(&self) -> OrdinalProfile {
        let ballots = self
            .ballots
            .iter()
            .flat_map(|b| {
                std::iter::repeat_n(
                    RankingBallot {
                        ranking: b.ranking.clone(),
                        weight: 1,
                    },
                    b.weight as usize,
                )
            })
            .collect();
        self.with_ballots(ballots).expect("expansion preserves validity")
    }

    /// A profile over the same alternatives with different ballots.
    pub fn with_ballots(&self, ballots: Vec<RankingBallot>) -> Result<OrdinalProfile> {
        OrdinalProfile::new(self.alternatives.clone(), ballots)
    }

    /// Ranking of ballot `b` as ids.
    pub fn ranking_ids(&self, b: usize) -> Vec<Alternative> {
        self.ids(&self.ballots[b].ranking)
    }
}

fn check_permutation(ranking: &[usize], m: usize) -> std::result::Result<(), String> {
    if ranking.len() != m {
        return Err(format!("ranking has {} entries, expected {m}", ranking.len()));
    }
    let mut seen = vec![false; m];
    for &a in ranking {
        if a >= m {
            return Err(format!("alternative index {a} out of range"));
        }
        if std::mem::replace(&mut seen[a], true) {
            return Err(format!("alternative index {a} repeated"));
        }
    }
    Ok(())
}

/// Parses the ballot file format described in the module docs.
pub fn parse_profile(text: &str) -> Result<OrdinalProfile, ParseError> {
    let mut alternatives: Option<(Vec<Alternative>, HashMap<String, usize>)> = None;
    let mut ballots = Vec::new();
    let mut last_line = 0;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, rest) = line
            .split_once(':')
            .ok_or_else(|| ParseError::new(line_no, "expected `alternatives: ...` or `COUNT: X > Y`"))?;
        let head = head.trim();

        if head == "alternatives" {
            if alternatives.is_some() {
                return Err(ParseError::new(line_no, "duplicate alternatives header"));
            }
            let mut alts = Vec::new();
            let mut lookup = HashMap::new();
            for tok in rest.split(',') {
                let tok = tok.trim();
                let alt = Alternative::new(tok)
                    .map_err(|_| ParseError::new(line_no, format!("invalid alternative id {tok:?}")))?;
                if lookup.insert(tok.to_string(), alts.len()).is_some() {
                    return Err(ParseError::new(line_no, format!("duplicate alternative {tok}")));
                }
                alts.push(alt);
            }
            alternatives = Some((alts, lookup));
            continue;
        }

        let (alts, lookup) = alternatives
            .as_ref()
            .ok_or_else(|| ParseError::new(line_no, "ballot before the alternatives header"))?;
        let weight: u64 = head
            .parse()
            .map_err(|_| ParseError::new(line_no, format!("invalid ballot count {head:?}")))?;
        if weight == 0 {
            return Err(ParseError::new(line_no, "ballot count must be positive"));
        }
        let mut ranking = Vec::with_capacity(alts.len());
        let mut seen = vec![false; alts.len()];
        for tok in rest.split('>') {
            let tok = tok.trim();
            if tok.is_empty() {
                return Err(ParseError::new(line_no, "empty position in ranking"));
            }
            let &i = lookup
                .get(tok)
                .ok_or_else(|| ParseError::new(line_no, format!("unknown alternative {tok:?}")))?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(ParseError::new(line_no, format!("alternative {tok} ranked twice")));
            }
            ranking.push(i);
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(ParseError::new(
                line_no,
                format!("alternative {} missing from ranking", alts[missing]),
            ));
        }
        ballots.push(RankingBallot { ranking, weight });
    }

    let (alts, _) = alternatives.ok_or_else(|| ParseError::new(last_line.max(1), "missing alternatives header"))?;
    if ballots.is_empty() {
        return Err(ParseError::new(last_line.max(1), "profile has no ballots"));
    }
    OrdinalProfile::new(alts, ballots).map_err(|e| ParseError::new(last_line.max(1), e.to_string()))
}

/// Canonical text form of a profile; `parse_profile` inverts it exactly.
pub fn format_profile(p: &OrdinalProfile) -> String {
    let mut out = String::from("alternatives: ");
    let header: Vec<&str> = p.alternatives.iter().map(Alternative::as_str).collect();
    out.push_str(&header.join(", "));
    out.push('\n');
    for b in &p.ballots {
        let ids: Vec<&str> = b.ranking.iter().map(|&i| p.alternatives[i].as_str()).collect();
        out.push_str(&format!("{}: {}\n", b.weight, ids.join(" > ")));
    }
    out
}

/// Pairwise majority margins: `get(a, b)` is the number of voters ranking `a`
/// above `b` minus the number ranking `b` above `a`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarginMatrix {
    alternatives: Vec<Alternative>,
    voters: u64,
    margins: Vec<Vec<i64>>,
}

impl MarginMatrix {
    pub fn size(&self) -> usize {
        self.alternatives.len()
    }

    pub fn alternatives(&self) -> &[Alternative] {
        &self.alternatives
    }

    pub fn voters(&self) -> u64 {
        self.voters
    }

    pub fn get(&self, a: usize, b: usize) -> i64 {
        self.margins[a][b]
    }

    /// Margin by id; `None` if either id is unknown.
    pub fn margin(&self, a: &str, b: &str) -> Option<i64> {
        let ia = self.alternatives.iter().position(|x| x.as_str() == a)?;
        let ib = self.alternatives.iter().position(|x| x.as_str() == b)?;
        Some(self.margins[ia][ib])
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.margins
    }

    /// `a` beats `b` by a strict majority.
    pub fn beats(&self, a: usize, b: usize) -> bool {
        self.margins[a][b] > 0
    }
}

pub fn margin_matrix(p: &OrdinalProfile) -> MarginMatrix {
    let m = p.num_alternatives();
    let mut margins = vec![vec![0i64; m]; m];
    let mut pos = vec![0usize; m];
    for b in p.ballots() {
        for (k, &a) in b.ranking.iter().enumerate() {
            pos[a] = k;
        }
        let w = b.weight as i64;
        for a in 0..m {
            for c in (a + 1)..m {
                let d = if pos[a] < pos[c] { w } else { -w };
                margins[a][c] += d;
                margins[c][a] -= d;
            }
        }
    }
    MarginMatrix {
        alternatives: p.alternatives().to_vec(),
        voters: p.num_voters(),
        margins,
    }
}

/// Condorcet winner and majority cycles of a margin matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CycleReport {
    pub has_condorcet_winner: bool,
    pub condorcet_winner: Option<Alternative>,
    /// Elementary cycles of the strict-majority digraph, each rotated to start
    /// at its smallest id.
    pub cycles: Vec<Vec<Alternative>>,
    /// False when only a single witness cycle was searched for.
    pub exhaustive: bool,
}

/// Above this many alternatives only one witness cycle is reported.
pub const FULL_CYCLE_ENUMERATION_LIMIT: usize = 8;

pub fn detect_cycles(mm: &MarginMatrix) -> CycleReport {
    let m = mm.size();
    let condorcet = (0..m).find(|&a| (0..m).all(|b| a == b || mm.beats(a, b)));
    let exhaustive = m <= FULL_CYCLE_ENUMERATION_LIMIT;
    let raw = if exhaustive {
        elementary_cycles(mm)
    } else {
        witness_cycle(mm).into_iter().collect()
    };
    let mut cycles: Vec<Vec<Alternative>> = raw
        .into_iter()
        .map(|c| canonical_rotation(c.into_iter().map(|i| mm.alternatives[i].clone()).collect()))
        .collect();
    cycles.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    CycleReport {
        has_condorcet_winner: condorcet.is_some(),
        condorcet_winner: condorcet.map(|a| mm.alternatives[a].clone()),
        cycles,
        exhaustive,
    }
}

fn canonical_rotation(mut cycle: Vec<Alternative>) -> Vec<Alternative> {
    if let Some(start) = (0..cycle.len()).min_by(|&a, &b| cycle[a].cmp(&cycle[b])) {
        cycle.rotate_left(start);
    }
    cycle
}

/// All elementary cycles, each found once from its smallest vertex index.
fn elementary_cycles(mm: &MarginMatrix) -> Vec<Vec<usize>> {
    fn extend(mm: &MarginMatrix, start: usize, path: &mut Vec<usize>, on_path: &mut [bool], out: &mut Vec<Vec<usize>>) {
        let last = *path.last().expect("path starts non-empty");
        for next in start..mm.size() {
            if !mm.beats(last, next) {
                continue;
            }
            if next == start {
                if path.len() >= 3 {
                    out.push(path.clone());
                }
            } else if !on_path[next] {
                on_path[next] = true;
                path.push(next);
                extend(mm, start, path, on_path, out);
                path.pop();
                on_path[next] = false;
            }
        }
    }

    let m = mm.size();
    let mut out = Vec::new();
    let mut on_path = vec![false; m];
    for start in 0..m {
        let mut path = vec![start];
        on_path[start] = true;
        extend(mm, start, &mut path, &mut on_path, &mut out);
        on_path[start] = false;
    }
    out
}

/// One cycle found by depth-first search, if any exists.
fn witness_cycle(mm: &MarginMatrix) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    fn visit(mm: &MarginMatrix, v: usize, marks: &mut [Mark], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        marks[v] = Mark::Active;
        stack.push(v);
        for w in 0..mm.size() {
            if !mm.beats(v, w) {
                continue;
            }
            match marks[w] {
                Mark::Active => {
                    let from = stack.iter().position(|&x| x == w).expect("active vertex is on the stack");
                    return Some(stack[from..].to_vec());
                }
                Mark::New => {
                    if let Some(c) = visit(mm, w, marks, stack) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        marks[v] = Mark::Done;
        None
    }

    let mut marks = vec![Mark::New; mm.size()];
    let mut stack = Vec::new();
    (0..mm.size()).find_map(|v| if marks[v] == Mark::New { visit(mm, v, &mut marks, &mut stack) } else { None })
}
