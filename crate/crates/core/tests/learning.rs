use choice_core::cardinal::CardinalRuleId;
use choice_core::fixtures::DINERS_BALLOTS;
use choice_core::ordinal::OrdinalRuleId;
use choice_core::pipeline::{
    emit_sft_dataset, evaluate_reward, rlchf_from_features, select_response, simulate_collective_decision,
    CollectiveOutcome, CollectiveRule, PromptCase, RewardModel, SelectionPolicy, SftRecord,
};
use choice_core::profile::Alternative;
use choice_core::sim::{
    fit_individual_model, predict_rating, sample_population, simulate_ratings, ComponentDist, EvaluatorFeatures,
    GroundTruthWorld, IndividualPreferenceModel, PopulationGroup, PopulationSpec, RatingSample, ResponseRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn response(id: &str, features: Vec<f64>) -> ResponseRecord {
    ResponseRecord {
        id: Alternative::new(id).unwrap(),
        text: format!("answer {id}"),
        features,
    }
}

fn one_hot(ids: &[&str]) -> Vec<ResponseRecord> {
    ids.iter()
        .enumerate()
        .map(|(i, id)| response(id, (0..ids.len()).map(|j| if i == j { 1.0 } else { 0.0 }).collect()))
        .collect()
}

/// Ratings written down directly from the bilinear form, without the simulator.
fn direct_samples(m_star: &[[f64; 2]; 2], points: &[([f64; 2], [f64; 2])]) -> Vec<RatingSample> {
    points
        .iter()
        .map(|(f, g)| {
            let mut r = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    r += f[i] * m_star[i][j] * g[j];
                }
            }
            RatingSample {
                evaluator: EvaluatorFeatures::new(f.to_vec()).unwrap(),
                response: g.to_vec(),
                rating: r,
            }
        })
        .collect()
}

fn grid_points(rng: &mut ChaCha8Rng, count: usize) -> Vec<([f64; 2], [f64; 2])> {
    (0..count)
        .map(|_| {
            (
                [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
            )
        })
        .collect()
}

const M_STAR: [[f64; 2]; 2] = [[4.0, 1.5], [2.0, 3.0]];

#[test]
fn noiseless_fit_recovers_the_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples = direct_samples(&M_STAR, &grid_points(&mut rng, 16));
    let psi = fit_individual_model(&samples, 0.0).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert!((psi.m_hat[i][j] - M_STAR[i][j]).abs() < 1e-6, "{:?}", psi.m_hat);
        }
    }
}

#[test]
fn simulator_agrees_with_direct_construction() {
    let world = GroundTruthWorld::new(M_STAR.iter().map(|r| r.to_vec()).collect(), 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points = grid_points(&mut rng, 20);
    let direct = direct_samples(&M_STAR, &points);
    for ((f, g), d) in points.iter().zip(&direct) {
        let sim = simulate_ratings(
            &world,
            &[EvaluatorFeatures::new(f.to_vec()).unwrap()],
            &[response("y", g.to_vec())],
            0,
        )
        .unwrap();
        assert!((sim[0].rating - d.rating).abs() < 1e-12);
    }
}

#[test]
fn held_out_predictions_match_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let psi = fit_individual_model(&direct_samples(&M_STAR, &grid_points(&mut rng, 32)), 0.0).unwrap();
    let held_out = direct_samples(&M_STAR, &grid_points(&mut rng, 50));
    for s in held_out {
        let got = predict_rating(&psi, &s.evaluator, &response("y", s.response.clone())).unwrap();
        assert!((got - s.rating).abs() <= 1e-5);
    }
}

#[test]
fn single_feature_population_collapses_to_one_reward() {
    let psi = IndividualPreferenceModel::new(vec![vec![2.0, 5.0, 1.0]]).unwrap();
    let spec = PopulationSpec {
        d: 1,
        groups: vec![PopulationGroup {
            weight: 1.0,
            components: vec![ComponentDist::Fixed { value: 1.0 }],
        }],
        noise_sigma: 0.0,
    };
    let ys = [response("a", vec![0.3, 0.9, 0.1]), response("b", vec![1.0, 0.2, 0.0]), response("c", vec![0.5, 0.5, 0.5])];
    for y in &ys {
        let mut values = Vec::new();
        for seed in 0..10 {
            for n in [1, 4, 9] {
                let sample = sample_population(&spec, n, seed).unwrap();
                for rule in CardinalRuleId::ALL {
                    values.push(evaluate_reward(&rlchf_from_features(&psi, &sample, rule).unwrap(), y).unwrap());
                }
            }
        }
        let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-12);
    }
}

fn three_way_case(prompt: &str) -> PromptCase {
    PromptCase::new(prompt, vec![response("a", vec![1.0]), response("b", vec![4.0]), response("c", vec![7.0])], None).unwrap()
}

#[test]
fn hot_softmax_is_uniform() {
    let model = RewardModel::Fitted { weights: vec![1.0], intercept: 0.0 };
    let draws = 10_000;
    let mut counts = [0usize; 3];
    for i in 0..draws {
        let case = three_way_case(&format!("prompt {i}"));
        let chosen = select_response(&model, &case, SelectionPolicy { temperature: 1e9 }, 17).unwrap();
        counts[["a", "b", "c"].iter().position(|id| *id == chosen.id.as_str()).unwrap()] += 1;
    }
    let expected = draws as f64 / 3.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p_value = 1.0 - ChiSquared::new(2.0).unwrap().cdf(stat);
    assert!(p_value > 0.01, "counts {counts:?}, p = {p_value}");
}

#[test]
fn greedy_choice_survives_positive_affine_maps() {
    let case = three_way_case("x");
    let base = RewardModel::Fitted { weights: vec![1.0], intercept: 0.0 };
    let expect = select_response(&base, &case, SelectionPolicy::GREEDY, 0).unwrap().id.clone();
    assert_eq!(expect.as_str(), "c");
    for (scale, shift) in [(0.5, 1.0), (0.1, 0.0), (1.2, 0.5)] {
        let moved = RewardModel::Fitted { weights: vec![scale], intercept: shift };
        assert_eq!(select_response(&moved, &case, SelectionPolicy::GREEDY, 3).unwrap().id, expect);
    }
}

/// Five evaluator types with one-hot features whose utilities reproduce the
/// five ballot types of the 23-voter jury.
fn diners_population() -> (IndividualPreferenceModel, Vec<EvaluatorFeatures>) {
    let ballots: Vec<(usize, [usize; 3])> = DINERS_BALLOTS
        .lines()
        .skip(1)
        .map(|line| {
            let (count, order) = line.split_once(':').unwrap();
            let idx: Vec<usize> = order.split('>').map(|s| (s.trim().as_bytes()[0] - b'A') as usize).collect();
            (count.trim().parse().unwrap(), [idx[0], idx[1], idx[2]])
        })
        .collect();
    assert_eq!(ballots.iter().map(|b| b.0).sum::<usize>(), 23);
    let mut m_hat = vec![vec![0.0; 3]; ballots.len()];
    let mut sample = Vec::new();
    for (t, (count, order)) in ballots.iter().enumerate() {
        for (pos, &alt) in order.iter().enumerate() {
            m_hat[t][alt] = [9.0, 5.0, 1.0][pos];
        }
        let f: Vec<f64> = (0..ballots.len()).map(|j| if j == t { 1.0 } else { 0.0 }).collect();
        sample.extend(std::iter::repeat_n(EvaluatorFeatures::new(f).unwrap(), *count));
    }
    (IndividualPreferenceModel::new(m_hat).unwrap(), sample)
}

#[test]
fn engineered_population_reproduces_the_jury_outcomes() {
    let (psi, sample) = diners_population();
    let case = PromptCase::new("Where should we eat?", one_hot(&["A", "B", "C"]), None).unwrap();
    for (rule, winner) in [
        (OrdinalRuleId::RankedPairs, "B"),
        (OrdinalRuleId::InstantRunoff, "A"),
        (OrdinalRuleId::Borda, "C"),
        (OrdinalRuleId::Plurality, "B"),
    ] {
        let outcome = simulate_collective_decision(&case, &psi, &sample, CollectiveRule::Single(rule)).unwrap();
        assert_eq!(outcome, CollectiveOutcome::Winner(Alternative::new(winner).unwrap()), "{rule}");
    }
    let sft = emit_sft_dataset(std::slice::from_ref(&case), &psi, &sample, CollectiveRule::Single(OrdinalRuleId::RankedPairs)).unwrap();
    assert_eq!(
        sft,
        [SftRecord {
            prompt: "Where should we eat?".into(),
            chosen: "B".into(),
            response: None,
        }]
    );
}

#[test]
fn lone_evaluator_gets_their_favourite() {
    let psi = IndividualPreferenceModel::new(vec![vec![1.0, 8.0, 3.0], vec![6.0, 0.0, 2.0]]).unwrap();
    let case = PromptCase::new("q", one_hot(&["x", "y", "z"]), None).unwrap();
    for (f, best) in [(vec![1.0, 0.0], "y"), (vec![0.0, 1.0], "x"), (vec![0.2, 0.9], "x")] {
        let sample = vec![EvaluatorFeatures::new(f).unwrap()];
        for rule in OrdinalRuleId::ALL {
            let out = simulate_collective_decision(&case, &psi, &sample, CollectiveRule::Single(rule)).unwrap();
            assert_eq!(out, CollectiveOutcome::Winner(Alternative::new(best).unwrap()));
        }
    }
}
