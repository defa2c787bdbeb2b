//! Social welfare functions over complete rankings.
//!
//! Every rule returns a full [`SocialRanking`]. Ties are always broken by
//! ascending alternative id and the broken groups are recorded in
//! `tie_groups`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::profile::{margin_matrix, Alternative, OrdinalProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrdinalRuleId {
    Plurality,
    Borda,
    #[serde(alias = "irv", alias = "instant-runoff")]
    InstantRunoff,
    #[serde(alias = "ranked-pairs")]
    RankedPairs,
}

impl OrdinalRuleId {
    pub const ALL: [OrdinalRuleId; 4] = [
        OrdinalRuleId::Plurality,
        OrdinalRuleId::Borda,
        OrdinalRuleId::InstantRunoff,
        OrdinalRuleId::RankedPairs,
    ];

    pub fn apply(self, p: &OrdinalProfile) -> SocialRanking {
        match self {
            OrdinalRuleId::Plurality => plurality(p),
            OrdinalRuleId::Borda => borda(p),
            OrdinalRuleId::InstantRunoff => instant_runoff(p),
            OrdinalRuleId::RankedPairs => ranked_pairs(p),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OrdinalRuleId::Plurality => "plurality",
            OrdinalRuleId::Borda => "borda",
            OrdinalRuleId::InstantRunoff => "instant_runoff",
            OrdinalRuleId::RankedPairs => "ranked_pairs",
        }
    }
}

impl fmt::Display for OrdinalRuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrdinalRuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "plurality" => Ok(OrdinalRuleId::Plurality),
            "borda" => Ok(OrdinalRuleId::Borda),
            "irv" | "instant_runoff" => Ok(OrdinalRuleId::InstantRunoff),
            "ranked_pairs" | "rp" => Ok(OrdinalRuleId::RankedPairs),
            _ => Err(Error::UnknownRule(format!("ordinal rule {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LockedPair {
    pub winner: Alternative,
    pub loser: Alternative,
    pub margin: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Elimination {
    pub alternative: Alternative,
    /// First-place support at the moment of elimination.
    pub first_places: u64,
}

/// Rule-specific trace behind a social ranking.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleDetail {
    Scores,
    Eliminations { order: Vec<Elimination> },
    LockedPairs { locked: Vec<LockedPair>, skipped: Vec<LockedPair> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SocialRanking {
    pub ranking: Vec<Alternative>,
    pub scores: Option<BTreeMap<Alternative, f64>>,
    /// Groups of alternatives whose relative order was decided by id.
    pub tie_groups: Vec<Vec<Alternative>>,
    pub detail: RuleDetail,
}

impl SocialRanking {
    pub fn winner(&self) -> &Alternative {
        &self.ranking[0]
    }

    pub fn position(&self, a: &str) -> Option<usize> {
        self.ranking.iter().position(|x| x.as_str() == a)
    }
}

/// Orders alternatives by descending score, ascending id on ties, and records
/// every tied group of size two or more.
fn rank_by_score(p: &OrdinalProfile, scores: &[u64]) -> (Vec<usize>, Vec<Vec<Alternative>>) {
    let mut order: Vec<usize> = (0..p.num_alternatives()).collect();
    order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(p.lex_rank(a).cmp(&p.lex_rank(b))));
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let end = (start..order.len())
            .find(|&k| scores[order[k]] != scores[order[start]])
            .unwrap_or(order.len());
        if end - start > 1 {
            groups.push(p.ids(&order[start..end]));
        }
        start = end;
    }
    (order, groups)
}

fn score_map(p: &OrdinalProfile, scores: &[u64]) -> BTreeMap<Alternative, f64> {
    scores
        .iter()
        .enumerate()
        .map(|(a, &s)| (p.alternative(a).clone(), s as f64))
        .collect()
}

fn first_place_counts(p: &OrdinalProfile) -> Vec<u64> {
    let mut firsts = vec![0u64; p.num_alternatives()];
    for b in p.ballots() {
        firsts[b.ranking[0]] += b.weight;
    }
    firsts
}

pub fn plurality(p: &OrdinalProfile) -> SocialRanking {
    let firsts = first_place_counts(p);
    let (order, tie_groups) = rank_by_score(p, &firsts);
    SocialRanking {
        ranking: p.ids(&order),
        scores: Some(score_map(p, &firsts)),
        tie_groups,
        detail: RuleDetail::Scores,
    }
}

/// Borda scores: `m - 1 - position` points per voter.
pub fn borda_scores(p: &OrdinalProfile) -> Vec<u64> {
    let m = p.num_alternatives();
    let mut scores = vec![0u64; m];
    for b in p.ballots() {
        for (pos, &a) in b.ranking.iter().enumerate() {
            scores[a] += b.weight * (m - 1 - pos) as u64;
        }
    }
    scores
}

pub fn borda(p: &OrdinalProfile) -> SocialRanking {
    let scores = borda_scores(p);
    let (order, tie_groups) = rank_by_score(p, &scores);
    SocialRanking {
        ranking: p.ids(&order),
        scores: Some(score_map(p, &scores)),
        tie_groups,
        detail: RuleDetail::Scores,
    }
}

/// Eliminates the alternative with the fewest current first places until one
/// remains; the largest id goes first among tied alternatives. The social
/// ranking is the reverse elimination order.
pub fn instant_runoff(p: &OrdinalProfile) -> SocialRanking {
    let m = p.num_alternatives();
    let mut active = vec![true; m];
    let mut eliminated = Vec::with_capacity(m);
    let mut order = Vec::with_capacity(m);
    let mut tie_groups = Vec::new();

    for _ in 1..m {
        let mut counts = vec![0u64; m];
        for b in p.ballots() {
            let top = b.ranking.iter().copied().find(|&a| active[a]).expect("one alternative is active");
            counts[top] += b.weight;
        }
        let fewest = (0..m).filter(|&a| active[a]).map(|a| counts[a]).min().expect("active set non-empty");
        let tied: Vec<usize> = (0..m).filter(|&a| active[a] && counts[a] == fewest).collect();
        let loser = *tied.iter().max_by_key(|&&a| p.lex_rank(a)).expect("tied set non-empty");
        if tied.len() > 1 {
            let mut group = tied.clone();
            group.sort_by_key(|&a| p.lex_rank(a));
            tie_groups.push(p.ids(&group));
        }
        active[loser] = false;
        order.push(loser);
        eliminated.push(Elimination {
            alternative: p.alternative(loser).clone(),
            first_places: fewest,
        });
    }
    let last = (0..m).find(|&a| active[a]).expect("one alternative survives");
    order.push(last);
    order.reverse();
    SocialRanking {
        ranking: p.ids(&order),
        scores: None,
        tie_groups,
        detail: RuleDetail::Eliminations { order: eliminated },
    }
}

/// Tideman's ranked pairs. Majority pairs are locked in descending margin
/// order (ascending `(winner id, loser id)` among equal margins) unless they
/// would close a cycle; the result is the topological order of the locked
/// graph with ascending id among incomparable alternatives.
pub fn ranked_pairs(p: &OrdinalProfile) -> SocialRanking {
    let m = p.num_alternatives();
    let mm = margin_matrix(p);
    let mut pairs: Vec<(usize, usize, i64)> = Vec::new();
    for a in 0..m {
        for b in 0..m {
            if mm.get(a, b) > 0 {
                pairs.push((a, b, mm.get(a, b)));
            }
        }
    }
    pairs.sort_by(|x, y| {
        y.2.cmp(&x.2)
            .then(p.lex_rank(x.0).cmp(&p.lex_rank(y.0)))
            .then(p.lex_rank(x.1).cmp(&p.lex_rank(y.1)))
    });

    let mut locked_graph = vec![vec![false; m]; m];
    let mut locked = Vec::new();
    let mut skipped = Vec::new();
    for (w, l, margin) in pairs {
        let pair = LockedPair {
            winner: p.alternative(w).clone(),
            loser: p.alternative(l).clone(),
            margin,
        };
        if reaches(&locked_graph, l, w) {
            skipped.push(pair);
        } else {
            locked_graph[w][l] = true;
            locked.push(pair);
        }
    }

    let (order, tie_groups) = topological_order(p, &locked_graph);
    assert_eq!(order.len(), m, "ranked pairs locked a cycle");
    SocialRanking {
        ranking: p.ids(&order),
        scores: None,
        tie_groups,
        detail: RuleDetail::LockedPairs { locked, skipped },
    }
}

fn reaches(graph: &[Vec<bool>], from: usize, to: usize) -> bool {
    let mut seen = vec![false; graph.len()];
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        stack.extend((0..graph.len()).filter(|&w| graph[v][w] && !seen[w]));
    }
    false
}

/// Kahn's algorithm picking the smallest id among available sources. Returns
/// fewer than `m` vertices if the graph has a cycle.
fn topological_order(p: &OrdinalProfile, graph: &[Vec<bool>]) -> (Vec<usize>, Vec<Vec<Alternative>>) {
    let m = graph.len();
    let mut indegree: Vec<usize> = (0..m).map(|b| (0..m).filter(|&a| graph[a][b]).count()).collect();
    let mut placed = vec![false; m];
    let mut order = Vec::with_capacity(m);
    let mut tie_groups = Vec::new();
    while order.len() < m {
        let mut sources: Vec<usize> = (0..m).filter(|&a| !placed[a] && indegree[a] == 0).collect();
        if sources.is_empty() {
            break;
        }
        sources.sort_by_key(|&a| p.lex_rank(a));
        if sources.len() > 1 {
            tie_groups.push(p.ids(&sources));
        }
        let next = sources[0];
        placed[next] = true;
        order.push(next);
        for b in 0..m {
            if graph[next][b] {
                indegree[b] -= 1;
            }
        }
    }
    (order, tie_groups)
}

/// A probability distribution over alternatives.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lottery {
    pub probabilities: BTreeMap<Alternative, f64>,
}

impl Lottery {
    pub fn probability(&self, a: &str) -> f64 {
        self.probabilities.get(a).copied().unwrap_or(0.0)
    }
}

/// Random dictatorship: each alternative wins with its share of first places.
/// The lottery does not depend on the seed; the sampled winner does.
pub fn random_dictator(p: &OrdinalProfile, seed: u64) -> (Lottery, Alternative) {
    let firsts = first_place_counts(p);
    let n = p.num_voters() as f64;
    let probabilities = firsts
        .iter()
        .enumerate()
        .map(|(a, &c)| (p.alternative(a).clone(), c as f64 / n))
        .collect();
    // Sample over alternatives in id order so the draw is independent of header order.
    let weights: Vec<u64> = p.lex_order().iter().map(|&a| firsts[a]).collect();
    let dist = WeightedIndex::new(&weights).expect("at least one voter");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let winner = p.alternative(p.lex_order()[dist.sample(&mut rng)]).clone();
    (Lottery { probabilities }, winner)
}
