//! Cardinal aggregation of ratings and multi-winner committee rules.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ordinal::borda_scores;
use crate::profile::{Alternative, OrdinalProfile, RankingBallot};

pub const SCALE_MIN: f64 = 0.0;
pub const SCALE_MAX: f64 = 10.0;
pub const SCALE_MID: f64 = 5.0;

pub fn clamp_to_scale(x: f64) -> f64 {
    x.clamp(SCALE_MIN, SCALE_MAX)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardinalRuleId {
    Mean,
    Median,
}

impl CardinalRuleId {
    pub const ALL: [CardinalRuleId; 2] = [CardinalRuleId::Mean, CardinalRuleId::Median];

    /// Aggregates one alternative's ratings.
    pub fn aggregate(self, values: &[f64]) -> Result<f64> {
        if values.is_empty() {
            return Err(Error::EmptyEvaluators);
        }
        Ok(match self {
            CardinalRuleId::Mean => values.iter().sum::<f64>() / values.len() as f64,
            CardinalRuleId::Median => {
                let mut sorted = values.to_vec();
                sorted.sort_by(f64::total_cmp);
                let mid = sorted.len() / 2;
                if sorted.len() % 2 == 1 {
                    sorted[mid]
                } else {
                    (sorted[mid - 1] + sorted[mid]) / 2.0
                }
            }
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CardinalRuleId::Mean => "mean",
            CardinalRuleId::Median => "median",
        }
    }
}

impl fmt::Display for CardinalRuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CardinalRuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" | "average" => Ok(CardinalRuleId::Mean),
            "median" => Ok(CardinalRuleId::Median),
            _ => Err(Error::UnknownRule(format!("cardinal rule {s:?}"))),
        }
    }
}

/// Every evaluator's rating of every alternative on the `[0, 10]` scale.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingProfile {
    alternatives: Vec<Alternative>,
    evaluators: Vec<String>,
    /// `ratings[e][a]`
    ratings: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RatingProfileJson {
    alternatives: Vec<Alternative>,
    ratings: BTreeMap<String, BTreeMap<String, f64>>,
}

impl RatingProfile {
    pub fn new(alternatives: Vec<Alternative>, evaluators: Vec<String>, ratings: Vec<Vec<f64>>) -> Result<Self> {
        if alternatives.is_empty() {
            return Err(Error::InvalidRatings("no alternatives".into()));
        }
        if evaluators.is_empty() {
            return Err(Error::EmptyEvaluators);
        }
        let mut seen = std::collections::HashSet::new();
        for a in &alternatives {
            if !seen.insert(a.as_str()) {
                return Err(Error::InvalidRatings(format!("duplicate alternative {a}")));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for e in &evaluators {
            if !seen.insert(e.as_str()) {
                return Err(Error::InvalidRatings(format!("duplicate evaluator {e}")));
            }
        }
        if ratings.len() != evaluators.len() {
            return Err(Error::InvalidRatings("one rating row per evaluator required".into()));
        }
        for (e, row) in evaluators.iter().zip(&ratings) {
            if row.len() != alternatives.len() {
                return Err(Error::InvalidRatings(format!("evaluator {e} does not rate every alternative")));
            }
            if let Some(bad) = row.iter().find(|r| !(SCALE_MIN..=SCALE_MAX).contains(*r)) {
                return Err(Error::InvalidRatings(format!("rating {bad} by {e} is outside [0, 10]")));
            }
        }
        Ok(RatingProfile {
            alternatives,
            evaluators,
            ratings,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RatingProfileJson =
            serde_json::from_str(text).map_err(|e| Error::InvalidRatings(e.to_string()))?;
        let index: HashMap<&str, usize> = raw.alternatives.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let mut evaluators = Vec::new();
        let mut rows = Vec::new();
        for (e, by_alt) in &raw.ratings {
            let mut row = vec![f64::NAN; raw.alternatives.len()];
            for (a, &r) in by_alt {
                let &i = index.get(a.as_str()).ok_or_else(|| Error::UnknownAlternative(a.clone()))?;
                row[i] = r;
            }
            if let Some(i) = row.iter().position(|r| r.is_nan()) {
                return Err(Error::InvalidRatings(format!("evaluator {e} did not rate {}", raw.alternatives[i])));
            }
            evaluators.push(e.clone());
            rows.push(row);
        }
        RatingProfile::new(raw.alternatives, evaluators, rows)
    }

    pub fn to_json(&self) -> String {
        let ratings = self
            .evaluators
            .iter()
            .zip(&self.ratings)
            .map(|(e, row)| {
                let by_alt = self.alternatives.iter().zip(row).map(|(a, &r)| (a.to_string(), r)).collect();
                (e.clone(), by_alt)
            })
            .collect();
        serde_json::to_string(&RatingProfileJson {
            alternatives: self.alternatives.clone(),
            ratings,
        })
        .expect("rating profile serializes")
    }

    pub fn alternatives(&self) -> &[Alternative] {
        &self.alternatives
    }

    pub fn evaluators(&self) -> &[String] {
        &self.evaluators
    }

    pub fn rating(&self, evaluator: usize, alternative: usize) -> f64 {
        self.ratings[evaluator][alternative]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.ratings
    }

    /// All ratings given to one alternative, in evaluator order.
    pub fn column(&self, alternative: usize) -> Vec<f64> {
        self.ratings.iter().map(|row| row[alternative]).collect()
    }

    /// Reorders evaluators; `order[k]` is the old index placed at position k.
    pub fn permuted(&self, order: &[usize]) -> RatingProfile {
        RatingProfile {
            alternatives: self.alternatives.clone(),
            evaluators: order.iter().map(|&i| self.evaluators[i].clone()).collect(),
            ratings: order.iter().map(|&i| self.ratings[i].clone()).collect(),
        }
    }

    /// One strict ranking per evaluator: descending rating, ascending id on ties.
    pub fn induced_profile(&self) -> OrdinalProfile {
        let mut lex: Vec<usize> = (0..self.alternatives.len()).collect();
        lex.sort_by(|&a, &b| self.alternatives[a].cmp(&self.alternatives[b]));
        let ballots = self
            .ratings
            .iter()
            .map(|row| {
                let mut ranking = lex.clone();
                // Stable sort over id order keeps ties by ascending id.
                ranking.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
                RankingBallot { ranking, weight: 1 }
            })
            .collect();
        OrdinalProfile::new(self.alternatives.clone(), ballots).expect("ratings induce valid rankings")
    }
}

/// Social rating of every alternative under `rule`.
pub fn aggregate_ratings(rp: &RatingProfile, rule: CardinalRuleId) -> Result<BTreeMap<Alternative, f64>> {
    rp.alternatives
        .iter()
        .enumerate()
        .map(|(a, alt)| Ok((alt.clone(), rule.aggregate(&rp.column(a))?)))
        .collect()
}

/// Winners of a multi-winner rule, in selection order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committee {
    pub winners: Vec<Alternative>,
}

impl Committee {
    pub fn size(&self) -> usize {
        self.winners.len()
    }
}

fn check_committee_size(p: &OrdinalProfile, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidProfile("committee size must be positive".into()));
    }
    if k > p.num_alternatives() {
        return Err(Error::CommitteeTooLarge {
            k,
            m: p.num_alternatives(),
        });
    }
    Ok(())
}

/// The k highest Borda scores, ties by ascending id.
pub fn k_borda(p: &OrdinalProfile, k: usize) -> Result<Committee> {
    check_committee_size(p, k)?;
    let scores = borda_scores(p);
    let mut order: Vec<usize> = (0..p.num_alternatives()).collect();
    order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(p.lex_rank(a).cmp(&p.lex_rank(b))));
    order.truncate(k);
    Ok(Committee { winners: p.ids(&order) })
}

/// Chamberlin–Courant value of a committee under Borda satisfaction: every
/// voter counts the Borda points of their best-ranked committee member.
pub fn cc_score(p: &OrdinalProfile, committee: &[usize]) -> u64 {
    let m = p.num_alternatives();
    p.ballots()
        .iter()
        .map(|b| {
            let best = b.ranking.iter().position(|a| committee.contains(a)).map_or(0, |pos| m - 1 - pos);
            b.weight * best as u64
        })
        .sum()
}

/// Greedy Chamberlin–Courant: repeatedly add the alternative with the largest
/// committee score gain, smallest id on ties.
pub fn greedy_cc(p: &OrdinalProfile, k: usize) -> Result<Committee> {
    check_committee_size(p, k)?;
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, u64)> = None;
        for &a in p.lex_order() {
            if chosen.contains(&a) {
                continue;
            }
            let mut trial = chosen.clone();
            trial.push(a);
            let s = cc_score(p, &trial);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((a, s));
            }
        }
        let (best, _) = best.expect("k <= m leaves a candidate");
        chosen.push(best);
    }
    Ok(Committee { winners: p.ids(&chosen) })
}

/// Merges committee members' texts into one bulleted answer.
pub fn compose_multiwinner_response(committee: &Committee, texts: &HashMap<String, String>) -> Result<String> {
    let mut out = format!("The following are {} typical answers to your question:", committee.size());
    for w in &committee.winners {
        let text = texts.get(w.as_str()).ok_or_else(|| Error::MissingText(w.to_string()))?;
        out.push_str("\n- ");
        out.push_str(text);
    }
    Ok(out)
}
