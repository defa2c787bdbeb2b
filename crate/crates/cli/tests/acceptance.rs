//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use choice_core::audits::{
    anonymity_check, anonymity_check_ordinal, anonymity_check_ratings, clone_independence_sweep, clone_test, default_grid,
    manipulation_search_cardinal, manipulation_search_ordinal, random_profile, AuditedRule, CloneOrders, CloneSpec,
    ManipulationWitness, SweepConfig,
};
use choice_core::cardinal::{aggregate_ratings, CardinalRuleId, RatingProfile};
use choice_core::fixtures::{self, DINERS_BALLOTS};
use choice_core::judgment::{check_consistency, closest_consistent, majority_judgments, Agenda, JudgmentProfile};
use choice_core::ordinal::OrdinalRuleId;
use choice_core::pipeline::{evaluate_reward, rlchf_from_features, rlchf_from_rankings, PromptCase};
use choice_core::profile::{detect_cycles, margin_matrix, Alternative, OrdinalProfile, RankingBallot};
use choice_core::sim::{
    fit_individual_model, sample_population, simulate_ratings, ComponentDist, EvaluatorFeatures, GroundTruthWorld,
    IndividualPreferenceModel, PopulationGroup, PopulationSpec, ResponseRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn ids(v: &[Alternative]) -> String {
    v.iter().map(Alternative::as_str).collect()
}

fn alt(s: &str) -> Alternative {
    Alternative::new(s).unwrap()
}

fn diners_golden_triple() -> Outcome {
    let start = Instant::now();
    let p = fixtures::diners();
    let got: Vec<String> = [OrdinalRuleId::Borda, OrdinalRuleId::InstantRunoff, OrdinalRuleId::RankedPairs]
        .iter()
        .map(|r| ids(&r.apply(&p).ranking))
        .collect();
    let elapsed = start.elapsed();
    ensure(got == ["CBA", "ABC", "BCA"], || format!("got {got:?}"))?;
    within(elapsed, Duration::from_millis(10))?;
    Ok(format!("borda {}, irv {}, ranked pairs {} in {elapsed:?}", got[0], got[1], got[2]))
}

fn diners_margins() -> Outcome {
    let p = fixtures::diners();
    let mm = margin_matrix(&p);
    let m = |a: &str, b: &str| mm.margin(a, b).unwrap();
    let got = (m("A", "B"), m("B", "C"), m("C", "A"));
    ensure(got == (1, 3, 7), || format!("margins {got:?}"))?;
    let smallest = [("A", "B"), ("B", "C"), ("C", "A")].into_iter().min_by_key(|(a, b)| m(a, b)).unwrap();
    ensure(smallest == ("A", "B"), || format!("smallest victory {smallest:?}"))?;
    let report = detect_cycles(&mm);
    ensure(!report.has_condorcet_winner && report.cycles == vec![vec![alt("A"), alt("B"), alt("C")]], || {
        format!("cycle report {report:?}")
    })?;
    Ok("M[A][B]=+1, M[B][C]=+3, M[C][A]=+7, cycle (A,B,C)".into())
}

fn condorcet_cycle_witness() -> Outcome {
    let report = detect_cycles(&margin_matrix(&fixtures::condorcet_cycle()));
    ensure(report.condorcet_winner.is_none() && !report.has_condorcet_winner, || "unexpected Condorcet winner".into())?;
    ensure(report.cycles == vec![vec![alt("A"), alt("B"), alt("C")]], || format!("cycles {:?}", report.cycles))?;
    Ok("no Condorcet winner, cycle (A,B,C)".into())
}

fn clone_flip() -> Outcome {
    let before = fixtures::restaurant();
    let after = fixtures::restaurant_with_clones();
    let plurality_before = OrdinalRuleId::Plurality.apply(&before);
    let plurality_after = OrdinalRuleId::Plurality.apply(&after);
    ensure(plurality_before.winner().as_str() == "C", || format!("plurality before: {}", plurality_before.winner()))?;
    let i_firsts = plurality_after.scores.as_ref().unwrap()[&alt("I")];
    ensure(plurality_after.winner().as_str() == "I" && i_firsts == 48.0, || {
        format!("plurality after: {} with {i_firsts} firsts for I", plurality_after.winner())
    })?;

    // Oracle: both clones beat I by 52 - 48 and tie each other, so the first
    // lock is a clone over I and a clone must head the ranking.
    let mm = margin_matrix(&after);
    let margins = (mm.margin("C1", "I").unwrap(), mm.margin("C2", "I").unwrap(), mm.margin("C1", "C2").unwrap());
    ensure(margins == (4, 4, 0), || format!("clone margins {margins:?}"))?;
    let rp = OrdinalRuleId::RankedPairs.apply(&after);
    ensure(["C1", "C2"].contains(&rp.winner().as_str()), || format!("ranked pairs winner {}", rp.winner()))?;

    let spec = CloneSpec::new("C", 2).with_orders(CloneOrders::Rotating);
    let pv = clone_test(OrdinalRuleId::Plurality, &before, &spec).map_err(|e| e.to_string())?;
    let rv = clone_test(OrdinalRuleId::RankedPairs, &before, &spec).map_err(|e| e.to_string())?;
    ensure(pv.is_violated() && !rv.is_violated(), || format!("clone_test: {pv:?} / {rv:?}"))?;
    Ok(format!("plurality C -> I (48 firsts); ranked pairs keeps {}", rp.winner()))
}

fn median_vs_mean() -> Outcome {
    let start = Instant::now();
    let rp = |r: [f64; 3]| {
        RatingProfile::new(vec![alt("x")], vec!["v0".into(), "v1".into(), "v2".into()], r.iter().map(|v| vec![*v]).collect())
            .unwrap()
    };
    let agg = |r: [f64; 3], w| aggregate_ratings(&rp(r), w).unwrap()[&alt("x")];
    let got = [
        agg([3.0, 6.0, 6.0], CardinalRuleId::Mean),
        agg([3.0, 6.0, 6.0], CardinalRuleId::Median),
        agg([0.0, 6.0, 6.0], CardinalRuleId::Mean),
        agg([0.0, 6.0, 6.0], CardinalRuleId::Median),
    ];
    let mean_witness = manipulation_search_cardinal(CardinalRuleId::Mean, &[3.0, 6.0, 6.0], 0, &default_grid()).map_err(|e| e.to_string())?;
    let median_witness = manipulation_search_cardinal(CardinalRuleId::Median, &[3.0, 6.0, 6.0], 0, &default_grid()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(got == [5.0, 6.0, 4.0, 6.0], || format!("aggregates {got:?}"))?;
    let expected = ManipulationWitness::Cardinal {
        voter: 0,
        true_rating: 3.0,
        misreport: 0.0,
        honest_aggregate: 5.0,
        manipulated_aggregate: 4.0,
    };
    ensure(mean_witness.as_ref() == Some(&expected), || format!("mean witness {mean_witness:?}"))?;
    ensure(median_witness.is_none(), || format!("median witness {median_witness:?}"))?;
    within(elapsed, Duration::from_millis(10))?;
    Ok(format!("mean 5 -> 4 by reporting 0, median stays 6, in {elapsed:?}"))
}

fn judgment_paradox() -> Outcome {
    let agenda = Agenda::new(vec!["safe".into(), "helpful".into(), "give".into()], "give <-> (safe & helpful)").map_err(|e| e.to_string())?;
    let js = |b: [bool; 3]| agenda.judgment(&b).unwrap();
    let profile = JudgmentProfile::new(
        agenda.clone(),
        vec![
            ("E1".into(), js([true, false, false])),
            ("E2".into(), js([false, true, false])),
            ("E3".into(), js([true, true, true])),
        ],
    )
    .map_err(|e| e.to_string())?;
    let majority = majority_judgments(&profile).map_err(|e| e.to_string())?;
    ensure(majority.in_order(&agenda) == [true, true, false], || format!("majority {majority:?}"))?;
    ensure(!check_consistency(&majority, &agenda).unwrap(), || "majority reported consistent".into())?;
    let (repair, distance) = closest_consistent(&majority, &agenda).map_err(|e| e.to_string())?;
    ensure(check_consistency(&repair, &agenda).unwrap() && distance == 1, || format!("repair {repair:?} at {distance}"))?;
    let best = (0..8u8)
        .map(|x| js([x & 1 != 0, x & 2 != 0, x & 4 != 0]))
        .filter(|c| check_consistency(c, &agenda).unwrap())
        .map(|c| c.hamming(&majority))
        .min()
        .unwrap();
    ensure(best == distance, || format!("enumeration minimum {best}, repair {distance}"))?;
    Ok(format!("majority (1,1,0) inconsistent, repaired to {:?} at distance 1", repair.in_order(&agenda)))
}

fn regression_recovery() -> Outcome {
    let start = Instant::now();
    let m_star = vec![vec![4.0, 1.5], vec![2.0, 3.0]];
    let world = GroundTruthWorld::new(m_star.clone(), 0.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let evaluators: Vec<EvaluatorFeatures> = (0..4)
        .map(|_| EvaluatorFeatures::new(vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).unwrap())
        .collect();
    let responses: Vec<ResponseRecord> = (0..5)
        .map(|i| ResponseRecord {
            id: alt(&format!("y{i}")),
            text: String::new(),
            features: vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
        })
        .collect();
    let samples = simulate_ratings(&world, &evaluators, &responses, 1).map_err(|e| e.to_string())?;
    // Oracle: ratings written directly from the bilinear form.
    for s in &samples {
        let direct: f64 = (0..2).map(|i| (0..2).map(|j| s.evaluator.as_slice()[i] * m_star[i][j] * s.response[j]).sum::<f64>()).sum();
        ensure((s.rating - direct).abs() < 1e-12, || format!("simulated {} vs direct {direct}", s.rating))?;
    }
    let psi = fit_individual_model(&samples, 0.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let err = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (psi.m_hat[i][j] - m_star[i][j]).abs())
        .fold(0.0, f64::max);
    ensure(samples.len() >= 16 && err < 1e-6, || format!("{} samples, max error {err:e}", samples.len()))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("{} samples, max entry error {err:.1e}, in {elapsed:?}", samples.len()))
}

fn standard_model_reduction() -> Outcome {
    let psi = IndividualPreferenceModel::new(vec![vec![3.0, 1.0, 4.0]]).map_err(|e| e.to_string())?;
    let spec = PopulationSpec {
        d: 1,
        groups: vec![PopulationGroup {
            weight: 1.0,
            components: vec![ComponentDist::Fixed { value: 1.0 }],
        }],
        noise_sigma: 0.0,
    };
    let ys: Vec<ResponseRecord> = [[0.1, 0.5, 0.9], [1.0, 0.0, 0.2], [0.3, 0.3, 0.3]]
        .iter()
        .enumerate()
        .map(|(i, g)| ResponseRecord {
            id: alt(&format!("y{i}")),
            text: String::new(),
            features: g.to_vec(),
        })
        .collect();
    let mut spread: f64 = 0.0;
    for y in &ys {
        let mut values = Vec::new();
        for seed in 0..20 {
            for n in [1, 5, 12] {
                let sample = sample_population(&spec, n, seed).map_err(|e| e.to_string())?;
                for w in CardinalRuleId::ALL {
                    let model = rlchf_from_features(&psi, &sample, w).map_err(|e| e.to_string())?;
                    values.push(evaluate_reward(&model, y).map_err(|e| e.to_string())?);
                }
            }
        }
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        spread = spread.max(hi - lo);
    }
    ensure(spread < 1e-12, || format!("spread {spread:e}"))?;
    Ok(format!("max spread {spread:e} over 120 samples per response"))
}

fn rule_sensitivity() -> Outcome {
    let lines: Vec<String> = DINERS_BALLOTS.lines().skip(1).map(str::to_string).collect();
    let responses = ["A", "B", "C"]
        .iter()
        .enumerate()
        .map(|(i, id)| ResponseRecord {
            id: alt(id),
            text: String::new(),
            features: (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect(),
        })
        .collect();
    let case = PromptCase::with_jury_lines("Where should we eat?", responses, &lines).map_err(|e| e.to_string())?;
    let mut orders = Vec::new();
    for rule in [OrdinalRuleId::Borda, OrdinalRuleId::InstantRunoff, OrdinalRuleId::RankedPairs] {
        let fit = rlchf_from_rankings(std::slice::from_ref(&case), rule, 1e-9).map_err(|e| e.to_string())?;
        let mut by_target = fit.cases[0].targets.clone();
        by_target.sort_by(|a, b| b.1.total_cmp(&a.1));
        orders.push(by_target.iter().map(|(a, _)| a.as_str()).collect::<String>());
    }
    ensure(orders == ["CBA", "ABC", "BCA"], || format!("target orders {orders:?}"))?;
    Ok(format!("target orders {}", orders.join(" / ")))
}

fn simulate_twice(config: &Path, dir: &Path, tag: &str) -> Result<(Vec<u8>, Vec<u8>), String> {
    let out = dir.join(format!("{tag}.out"));
    let run = Command::new(env!("CARGO_BIN_EXE_choice"))
        .args(["simulate", "--config", config.to_str().unwrap(), "--seed", "11", "--out", out.to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(run.status.success(), || format!("{}: {}", config.display(), String::from_utf8_lossy(&run.stderr)))?;
    Ok((run.stdout, std::fs::read(&out).map_err(|e| e.to_string())?))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sim = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sim");
    let configs = ["rankings", "features", "collective", "committee", "inference"];
    for name in configs {
        let config = sim.join(format!("{name}.json"));
        let first = simulate_twice(&config, dir.path(), &format!("{name}-1"))?;
        let second = simulate_twice(&config, dir.path(), &format!("{name}-2"))?;
        ensure(first.0 == second.0, || format!("{name}: reports differ"))?;
        ensure(first.1 == second.1, || format!("{name}: datasets differ"))?;
        ensure(!first.1.is_empty(), || format!("{name}: empty dataset"))?;
    }
    Ok(format!("{} configs, reports and datasets byte-identical", configs.len()))
}

fn random_ratings(rng: &mut ChaCha8Rng) -> RatingProfile {
    let m = rng.random_range(1..=4);
    let n = rng.random_range(1..=7);
    RatingProfile::new(
        (0..m).map(|i| alt(&format!("r{i}"))).collect(),
        (0..n).map(|i| format!("e{i}")).collect(),
        (0..n).map(|_| (0..m).map(|_| f64::from(rng.random_range(0u8..=10))).collect()).collect(),
    )
    .unwrap()
}

fn property_sweeps() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // Anonymity over 1000 random profiles for every rule.
    for i in 0..1000u64 {
        let m = rng.random_range(2..=5);
        let n = rng.random_range(1..=9);
        let p = random_profile(&mut rng, m, n);
        for rule in OrdinalRuleId::ALL {
            ensure(anonymity_check(|q: &OrdinalProfile| rule.apply(q), &p, i), || format!("{rule} not anonymous"))?;
        }
        ensure(anonymity_check_ordinal(AuditedRule::RandomDictator, &p, i).unwrap(), || "random dictator not anonymous".into())?;
        let rp = random_ratings(&mut rng);
        for w in CardinalRuleId::ALL {
            ensure(anonymity_check_ratings(w, &rp, i), || format!("{w} not anonymous"))?;
        }
    }

    // Condorcet consistency of ranked pairs, every unit-ballot profile with m = 3, n <= 5.
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut with_winner = 0;
    for n in 1..=5u32 {
        for code in 0..6usize.pow(n) {
            let mut c = code;
            let ballots = (0..n)
                .map(|_| {
                    let r = perms[c % 6].to_vec();
                    c /= 6;
                    RankingBallot { ranking: r, weight: 1 }
                })
                .collect();
            let p = OrdinalProfile::new(vec![alt("A"), alt("B"), alt("C")], ballots).unwrap();
            let mm = margin_matrix(&p);
            // Brute-force winner straight from the margins.
            let oracle = (0..3).find(|&a| (0..3).all(|b| a == b || mm.get(a, b) > 0));
            let report = detect_cycles(&mm);
            ensure(report.condorcet_winner.as_ref() == oracle.map(|a| p.alternative(a)), || "detect_cycles disagrees".into())?;
            if let Some(a) = oracle {
                with_winner += 1;
                let w = OrdinalRuleId::RankedPairs.apply(&p);
                ensure(w.winner() == p.alternative(a), || format!("ranked pairs elects {} over {}", w.winner(), p.alternative(a)))?;
            }
        }
    }

    // Clone sweeps.
    let cfg = SweepConfig::default();
    let mut counts = Vec::new();
    for rule in [OrdinalRuleId::RankedPairs, OrdinalRuleId::Borda, OrdinalRuleId::Plurality] {
        let r = clone_independence_sweep(rule, &cfg).map_err(|e| e.to_string())?;
        counts.push((rule, r.violations, r.profiles_checked));
    }
    ensure(counts[0].1 == 0, || format!("ranked pairs violations {:?}", counts[0]))?;
    ensure(counts[1].1 >= 1 && counts[2].1 >= 1, || format!("borda/plurality sweep {counts:?}"))?;

    // Every witness re-verifies.
    let mut witnesses = 0;
    for _ in 0..300 {
        let m = rng.random_range(2..=4);
        let n = rng.random_range(1..=5);
        let p = random_profile(&mut rng, m, n);
        for rule in OrdinalRuleId::ALL {
            for voter in 0..n {
                if let Some(w) = manipulation_search_ordinal(rule, &p, voter).map_err(|e| e.to_string())? {
                    witnesses += 1;
                    ensure(w.verify_ordinal(rule, &p), || format!("{rule} witness fails: {w:?}"))?;
                }
            }
        }
        let ratings: Vec<f64> = (0..rng.random_range(1..=7)).map(|_| f64::from(rng.random_range(0u8..=10))).collect();
        for w in CardinalRuleId::ALL {
            for voter in 0..ratings.len() {
                if let Some(found) = manipulation_search_cardinal(w, &ratings, voter, &default_grid()).map_err(|e| e.to_string())? {
                    witnesses += 1;
                    ensure(found.verify_cardinal(w, &ratings), || format!("{w} witness fails: {found:?}"))?;
                }
            }
        }
    }
    ensure(witnesses > 0, || "no witnesses found to verify".into())?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "anonymity 1000 profiles; {with_winner} Condorcet profiles; clone violations rp {} / borda {} / plurality {} of {}; {witnesses} witnesses re-verified; {elapsed:.1?}",
        counts[0].1, counts[1].1, counts[2].1, cfg.profiles
    ))
}

fn main() {
    let start = Instant::now();
    let criteria: [(&str, Check); 11] = [
        ("diners golden triple", diners_golden_triple),
        ("diners margin structure", diners_margins),
        ("condorcet cycle witness", condorcet_cycle_witness),
        ("clone flip", clone_flip),
        ("median vs mean", median_vs_mean),
        ("judgment paradox", judgment_paradox),
        ("regression recovery", regression_recovery),
        ("standard model reduction", standard_model_reduction),
        ("pipeline rule sensitivity", rule_sensitivity),
        ("determinism", determinism),
        ("property sweeps", property_sweeps),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {reason}", i + 1);
            }
        }
    }
    let elapsed = start.elapsed();
    println!("{}/{} criteria passed in {elapsed:.1?}", criteria.len() - failed, criteria.len());
    if failed > 0 || elapsed > Duration::from_secs(60) {
        std::process::exit(1);
    }
}
