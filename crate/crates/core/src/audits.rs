//! Auditors for clone independence, manipulability and anonymity.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::cardinal::{CardinalRuleId, RatingProfile};
use crate::error::{Error, Result};
use crate::judgment::JudgmentProfile;
use crate::ordinal::{random_dictator, OrdinalRuleId};
use crate::profile::{margin_matrix, Alternative, OrdinalProfile, RankingBallot};
use crate::seed::derived_rng;

/// Exhaustive search caps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SearchLimits {
    pub max_alternatives: usize,
    pub max_raters: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_alternatives: 6,
            max_raters: 7,
        }
    }
}

// ---------------------------------------------------------------------------
// Clones
// ---------------------------------------------------------------------------

/// How the clones are ordered inside each ballot's clone block.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CloneOrders {
    /// `T1 > T2 > ...` in every ballot.
    Lexicographic,
    /// Ballot `i` gets the lexicographic order rotated left by `i mod copies`.
    Rotating,
    /// Explicit clone permutations (as clone indices `0..copies`) for some
    /// ballots; the rest use the lexicographic order.
    PerBallot(BTreeMap<usize, Vec<usize>>),
}

/// Replace `target` by `copies` adjacent clones named `{target}1`, `{target}2`, ...
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CloneSpec {
    pub target: String,
    pub copies: usize,
    pub orders: CloneOrders,
}

impl CloneSpec {
    pub fn new(target: impl Into<String>, copies: usize) -> Self {
        CloneSpec {
            target: target.into(),
            copies,
            orders: CloneOrders::Lexicographic,
        }
    }

    pub fn with_orders(mut self, orders: CloneOrders) -> Self {
        self.orders = orders;
        self
    }

    pub fn clone_ids(&self) -> Vec<String> {
        (1..=self.copies).map(|i| format!("{}{i}", self.target)).collect()
    }

    fn order_for(&self, ballot: usize) -> Result<Vec<usize>> {
        let lex: Vec<usize> = (0..self.copies).collect();
        Ok(match &self.orders {
            CloneOrders::Lexicographic => lex,
            CloneOrders::Rotating => {
                let mut o = lex;
                o.rotate_left(ballot % self.copies);
                o
            }
            CloneOrders::PerBallot(map) => match map.get(&ballot) {
                None => lex,
                Some(perm) => {
                    let mut sorted = perm.clone();
                    sorted.sort_unstable();
                    if sorted != lex {
                        return Err(Error::InvalidProfile(format!(
                            "clone order for ballot {ballot} is not a permutation of 0..{}",
                            self.copies
                        )));
                    }
                    perm.clone()
                }
            },
        })
    }
}

/// The profile with the target replaced by a contiguous clone block, placed
/// where the target stood in the header and in every ballot.
pub fn clone_profile(p: &OrdinalProfile, cs: &CloneSpec) -> Result<OrdinalProfile> {
    let t = p
        .index_of(&cs.target)
        .ok_or_else(|| Error::UnknownAlternative(cs.target.clone()))?;
    if cs.copies == 0 {
        return Err(Error::InvalidProfile("clone count must be positive".into()));
    }
    if cs.copies == 1 {
        return Ok(p.clone());
    }
    let ids = cs.clone_ids();
    if let Some(clash) = ids.iter().find(|id| p.index_of(id).is_some()) {
        return Err(Error::InvalidProfile(format!("clone id {clash} already names an alternative")));
    }
    // New index of every old alternative, and of the clones.
    let shift = |a: usize| if a < t { a } else { a + cs.copies - 1 };
    let mut alternatives: Vec<Alternative> = Vec::with_capacity(p.num_alternatives() + cs.copies - 1);
    for (a, alt) in p.alternatives().iter().enumerate() {
        if a == t {
            for id in &ids {
                alternatives.push(Alternative::new(id.as_str())?);
            }
        } else {
            alternatives.push(alt.clone());
        }
    }
    let ballots = p
        .ballots()
        .iter()
        .enumerate()
        .map(|(bi, b)| {
            let order = cs.order_for(bi)?;
            let mut ranking = Vec::with_capacity(alternatives.len());
            for &a in &b.ranking {
                if a == t {
                    ranking.extend(order.iter().map(|&c| t + c));
                } else {
                    ranking.push(shift(a));
                }
            }
            Ok(RankingBallot { ranking, weight: b.weight })
        })
        .collect::<Result<Vec<_>>>()?;
    OrdinalProfile::new(alternatives, ballots)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum CloneVerdict {
    Independent {
        original_winner: Alternative,
        cloned_winner: Alternative,
    },
    Violated {
        original_winner: Alternative,
        cloned_winner: Alternative,
        /// The cloned winner with every clone read as the original target.
        cloned_winner_as_original: Alternative,
    },
}

impl CloneVerdict {
    pub fn is_violated(&self) -> bool {
        matches!(self, CloneVerdict::Violated { .. })
    }
}

/// Compares the winner before and after cloning, reading any clone as the
/// original target: a change means the rule is not clone independent here.
pub fn clone_test(rule: OrdinalRuleId, p: &OrdinalProfile, cs: &CloneSpec) -> Result<CloneVerdict> {
    let cloned = clone_profile(p, cs)?;
    let original_winner = rule.apply(p).winner().clone();
    let cloned_winner = rule.apply(&cloned).winner().clone();
    let as_original = if cs.copies > 1 && cs.clone_ids().iter().any(|id| id == cloned_winner.as_str()) {
        Alternative::new(cs.target.as_str())?
    } else {
        cloned_winner.clone()
    };
    Ok(if as_original == original_winner {
        CloneVerdict::Independent {
            original_winner,
            cloned_winner,
        }
    } else {
        CloneVerdict::Violated {
            original_winner,
            cloned_winner,
            cloned_winner_as_original: as_original,
        }
    })
}

// ---------------------------------------------------------------------------
// Manipulation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManipulationWitness {
    Ordinal {
        voter: usize,
        truthful: Vec<Alternative>,
        misreport: Vec<Alternative>,
        honest_winner: Alternative,
        manipulated_winner: Alternative,
    },
    Cardinal {
        voter: usize,
        true_rating: f64,
        misreport: f64,
        honest_aggregate: f64,
        manipulated_aggregate: f64,
    },
}

/// Ballot index holding unit voter `voter`.
fn ballot_of_voter(p: &OrdinalProfile, voter: usize) -> Result<usize> {
    let mut seen = 0u64;
    for (i, b) in p.ballots().iter().enumerate() {
        seen += b.weight;
        if (voter as u64) < seen {
            return Ok(i);
        }
    }
    Err(Error::InvalidProfile(format!("voter {voter} out of range (n = {})", p.num_voters())))
}

/// The profile with one unit of voter `voter`'s ballot replaced by `ranking`.
pub fn with_misreport(p: &OrdinalProfile, voter: usize, ranking: Vec<usize>) -> Result<OrdinalProfile> {
    let bi = ballot_of_voter(p, voter)?;
    let mut ballots: Vec<RankingBallot> = Vec::with_capacity(p.ballots().len() + 1);
    for (i, b) in p.ballots().iter().enumerate() {
        if i == bi {
            if b.weight > 1 {
                ballots.push(RankingBallot { ranking: b.ranking.clone(), weight: b.weight - 1 });
            }
            ballots.push(RankingBallot { ranking: ranking.clone(), weight: 1 });
        } else {
            ballots.push(b.clone());
        }
    }
    p.with_ballots(ballots)
}

/// Advances to the next permutation in lexicographic order.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

pub fn manipulation_search_ordinal(rule: OrdinalRuleId, p: &OrdinalProfile, voter: usize) -> Result<Option<ManipulationWitness>> {
    manipulation_search_ordinal_with(rule, p, voter, SearchLimits::default())
}

/// Tries every misreport in lexicographic id order and returns the first that
/// elects an alternative the voter truly ranks above the honest winner.
pub fn manipulation_search_ordinal_with(
    rule: OrdinalRuleId,
    p: &OrdinalProfile,
    voter: usize,
    limits: SearchLimits,
) -> Result<Option<ManipulationWitness>> {
    let m = p.num_alternatives();
    if m > limits.max_alternatives {
        return Err(Error::SearchTooLarge(format!(
            "{m} alternatives exceed the limit of {} for exhaustive misreport search",
            limits.max_alternatives
        )));
    }
    let truthful = p.ballots()[ballot_of_voter(p, voter)?].ranking.clone();
    let mut true_pos = vec![0; m];
    for (k, &a) in truthful.iter().enumerate() {
        true_pos[a] = k;
    }
    let honest = p.index_of(rule.apply(p).winner().as_str()).expect("winner is an alternative");

    // Permutations of lex ranks enumerate id sequences in lexicographic order.
    let mut lex_ranks: Vec<usize> = (0..m).collect();
    loop {
        let misreport: Vec<usize> = lex_ranks.iter().map(|&r| p.lex_order()[r]).collect();
        if misreport != truthful {
            let manipulated = rule.apply(&with_misreport(p, voter, misreport.clone())?);
            let w = p.index_of(manipulated.winner().as_str()).expect("winner is an alternative");
            if true_pos[w] < true_pos[honest] {
                return Ok(Some(ManipulationWitness::Ordinal {
                    voter,
                    truthful: p.ids(&truthful),
                    misreport: p.ids(&misreport),
                    honest_winner: p.alternative(honest).clone(),
                    manipulated_winner: p.alternative(w).clone(),
                }));
            }
        }
        if !next_permutation(&mut lex_ranks) {
            return Ok(None);
        }
    }
}

/// The integer grid `0, 1, ..., 10`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(f64::from).collect()
}

/// Aggregates closer than this are not counted as improvements.
const CLOSER_EPS: f64 = 1e-12;

pub fn manipulation_search_cardinal(
    rule: CardinalRuleId,
    ratings: &[f64],
    voter: usize,
    grid: &[f64],
) -> Result<Option<ManipulationWitness>> {
    manipulation_search_cardinal_with(rule, ratings, voter, grid, SearchLimits::default())
}

/// Returns the first grid report that moves the aggregate strictly closer to
/// the voter's true rating, if any.
pub fn manipulation_search_cardinal_with(
    rule: CardinalRuleId,
    ratings: &[f64],
    voter: usize,
    grid: &[f64],
    limits: SearchLimits,
) -> Result<Option<ManipulationWitness>> {
    if ratings.len() > limits.max_raters {
        return Err(Error::SearchTooLarge(format!(
            "{} raters exceed the limit of {}",
            ratings.len(),
            limits.max_raters
        )));
    }
    let &truth = ratings
        .get(voter)
        .ok_or_else(|| Error::InvalidRatings(format!("voter {voter} out of range")))?;
    let honest = rule.aggregate(ratings)?;
    let mut reported = ratings.to_vec();
    for &g in grid {
        reported[voter] = g;
        let manipulated = rule.aggregate(&reported)?;
        if (manipulated - truth).abs() < (honest - truth).abs() - CLOSER_EPS {
            return Ok(Some(ManipulationWitness::Cardinal {
                voter,
                true_rating: truth,
                misreport: g,
                honest_aggregate: honest,
                manipulated_aggregate: manipulated,
            }));
        }
    }
    Ok(None)
}

impl ManipulationWitness {
    /// Re-runs the ordinal rule with the misreport and checks the claim.
    pub fn verify_ordinal(&self, rule: OrdinalRuleId, p: &OrdinalProfile) -> bool {
        let ManipulationWitness::Ordinal {
            voter,
            truthful,
            misreport,
            honest_winner,
            manipulated_winner,
        } = self
        else {
            return false;
        };
        let Some(ranking) = misreport.iter().map(|a| p.index_of(a.as_str())).collect::<Option<Vec<_>>>() else {
            return false;
        };
        let Ok(profile) = with_misreport(p, *voter, ranking) else {
            return false;
        };
        let pos = |a: &Alternative| truthful.iter().position(|x| x == a);
        rule.apply(p).winner() == honest_winner
            && rule.apply(&profile).winner() == manipulated_winner
            && matches!((pos(manipulated_winner), pos(honest_winner)), (Some(x), Some(y)) if x < y)
    }

    /// Re-aggregates with the misreport and checks the claim.
    pub fn verify_cardinal(&self, rule: CardinalRuleId, ratings: &[f64]) -> bool {
        let ManipulationWitness::Cardinal {
            voter,
            true_rating,
            misreport,
            honest_aggregate,
            manipulated_aggregate,
        } = *self
        else {
            return false;
        };
        let mut reported = ratings.to_vec();
        if voter >= reported.len() || reported[voter] != true_rating {
            return false;
        }
        reported[voter] = misreport;
        let (Ok(h), Ok(m)) = (rule.aggregate(ratings), rule.aggregate(&reported)) else {
            return false;
        };
        h == honest_aggregate
            && m == manipulated_aggregate
            && (m - true_rating).abs() < (h - true_rating).abs() - CLOSER_EPS
    }
}

// ---------------------------------------------------------------------------
// Anonymity
// ---------------------------------------------------------------------------

/// Profiles whose voters can be reordered.
pub trait VoterProfile: Sized {
    fn voter_count(&self) -> usize;
    /// `order[k]` is the voter placed at position k; weighted ballots are
    /// split into unit voters first.
    fn permuted(&self, order: &[usize]) -> Self;
}

impl VoterProfile for OrdinalProfile {
    fn voter_count(&self) -> usize {
        self.num_voters() as usize
    }

    fn permuted(&self, order: &[usize]) -> Self {
        let unit = self.expanded();
        let ballots = order.iter().map(|&i| unit.ballots()[i].clone()).collect();
        self.with_ballots(ballots).expect("permutation keeps ballots valid")
    }
}

impl VoterProfile for RatingProfile {
    fn voter_count(&self) -> usize {
        self.evaluators().len()
    }

    fn permuted(&self, order: &[usize]) -> Self {
        RatingProfile::permuted(self, order)
    }
}

impl VoterProfile for JudgmentProfile {
    fn voter_count(&self) -> usize {
        self.entries().len()
    }

    fn permuted(&self, order: &[usize]) -> Self {
        JudgmentProfile::permuted(self, order)
    }
}

pub const ANONYMITY_TRIALS: usize = 20;

/// True iff `rule` gives the same output on 20 seeded random voter orders.
pub fn anonymity_check<P, O, F>(rule: F, p: &P, seed: u64) -> bool
where
    P: VoterProfile,
    O: PartialEq,
    F: Fn(&P) -> O,
{
    let baseline = rule(p);
    let mut rng = derived_rng(seed, "anonymity", &[]);
    let mut order: Vec<usize> = (0..p.voter_count()).collect();
    (0..ANONYMITY_TRIALS).all(|_| {
        order.shuffle(&mut rng);
        rule(&p.permuted(&order)) == baseline
    })
}

/// Any rule the CLI can audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditedRule {
    Ordinal(OrdinalRuleId),
    RandomDictator,
    Cardinal(CardinalRuleId),
}

impl std::str::FromStr for AuditedRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        if norm == "random_dictator" {
            return Ok(AuditedRule::RandomDictator);
        }
        if let Ok(c) = norm.parse::<CardinalRuleId>() {
            return Ok(AuditedRule::Cardinal(c));
        }
        Ok(AuditedRule::Ordinal(norm.parse()?))
    }
}

pub fn anonymity_check_ordinal(rule: AuditedRule, p: &OrdinalProfile, seed: u64) -> Result<bool> {
    match rule {
        AuditedRule::Ordinal(r) => Ok(anonymity_check(|q: &OrdinalProfile| r.apply(q), p, seed)),
        AuditedRule::RandomDictator => Ok(anonymity_check(|q: &OrdinalProfile| random_dictator(q, seed).0, p, seed)),
        AuditedRule::Cardinal(_) => Err(Error::InvalidPipeline("cardinal rules need a rating profile".into())),
    }
}

pub fn anonymity_check_ratings(rule: CardinalRuleId, rp: &RatingProfile, seed: u64) -> bool {
    anonymity_check(|q: &RatingProfile| crate::cardinal::aggregate_ratings(q, rule).ok(), rp, seed)
}

// ---------------------------------------------------------------------------
// Randomized sweeps
// ---------------------------------------------------------------------------

/// A uniformly random profile of `n` unit ballots over ids `A`, `B`, ...
pub fn random_profile<R: Rng>(rng: &mut R, m: usize, n: usize) -> OrdinalProfile {
    let alternatives: Vec<Alternative> = (0..m)
        .map(|i| Alternative::new(((b'A' + i as u8) as char).to_string()).expect("letter id"))
        .collect();
    let ballots = (0..n)
        .map(|_| {
            let mut ranking: Vec<usize> = (0..m).collect();
            ranking.shuffle(rng);
            RankingBallot { ranking, weight: 1 }
        })
        .collect();
    OrdinalProfile::new(alternatives, ballots).expect("random profile is valid")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepConfig {
    pub profiles: usize,
    pub min_alternatives: usize,
    pub max_alternatives: usize,
    /// Voter counts are drawn from the odd numbers up to this bound.
    pub max_voters: usize,
    pub max_copies: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            profiles: 1000,
            min_alternatives: 2,
            max_alternatives: 4,
            max_voters: 9,
            max_copies: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub rule: OrdinalRuleId,
    pub profiles_checked: usize,
    pub violations: usize,
    pub first_violation: Option<(String, CloneSpec, CloneVerdict)>,
}

/// Random clone-independence sweep, one derived seed per profile. Profiles have
/// odd voter counts and no pairwise majority ties; each ballot gets a random
/// clone order.
pub fn clone_independence_sweep(rule: OrdinalRuleId, cfg: &SweepConfig) -> Result<SweepReport> {
    let mut report = SweepReport {
        rule,
        profiles_checked: 0,
        violations: 0,
        first_violation: None,
    };
    let mut attempt = 0u64;
    while report.profiles_checked < cfg.profiles {
        let mut rng = derived_rng(cfg.seed, "clone-sweep", &[&attempt.to_le_bytes()]);
        attempt += 1;
        let m = rng.random_range(cfg.min_alternatives..=cfg.max_alternatives);
        let n = 2 * rng.random_range(0..=(cfg.max_voters - 1) / 2) + 1;
        let p = random_profile(&mut rng, m, n);
        let mm = margin_matrix(&p);
        if (0..m).any(|a| (0..m).any(|b| a != b && mm.get(a, b) == 0)) {
            continue;
        }
        let target = p.alternative(rng.random_range(0..m)).to_string();
        let copies = rng.random_range(2..=cfg.max_copies);
        let orders = (0..n)
            .map(|b| {
                let mut perm: Vec<usize> = (0..copies).collect();
                perm.shuffle(&mut rng);
                (b, perm)
            })
            .collect();
        let spec = CloneSpec::new(target, copies).with_orders(CloneOrders::PerBallot(orders));
        let verdict = clone_test(rule, &p, &spec)?;
        report.profiles_checked += 1;
        if verdict.is_violated() {
            report.violations += 1;
            if report.first_violation.is_none() {
                report.first_violation = Some((crate::profile::format_profile(&p), spec, verdict));
            }
        }
    }
    Ok(report)
}
