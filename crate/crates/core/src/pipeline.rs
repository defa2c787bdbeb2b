//! Collective-feedback training pipelines at desk scale.
//!
//! * `rankings`: per-prompt jury rankings are aggregated by an ordinal rule,
//!   turned into linear target scores and regressed onto response features.
//! * `features`: an individual preference model is evaluated for a sampled
//!   population and the predictions are aggregated by a cardinal rule.
//! * `collective`: the simulated population elects a winner (or committee)
//!   per prompt, producing supervised `(prompt, chosen)` records.
//! * `inference`: the same election run on freshly generated candidates at
//!   query time, with no learning step.
//!
//! Policy training is replaced by [`select_response`] over a finite candidate set.

use std::collections::HashMap;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cardinal::{clamp_to_scale, compose_multiwinner_response, greedy_cc, k_borda, CardinalRuleId, Committee, RatingProfile};
use crate::error::{Error, Result};
use crate::linalg::ridge;
use crate::ordinal::OrdinalRuleId;
use crate::profile::{parse_profile, Alternative, OrdinalProfile};
use crate::seed::{derive_seed, derived_rng};
use crate::sim::{
    fit_individual_model, predict_rating, sample_population, simulate_ratings, EvaluatorFeatures, GroundTruthWorld,
    IndividualPreferenceModel, PopulationSpec, RatingSample, ResponseRecord,
};

/// A prompt, its candidate responses and optionally a jury's rankings of them.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptCase {
    pub prompt: String,
    pub responses: Vec<ResponseRecord>,
    pub jury: Option<OrdinalProfile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PromptCaseJson {
    prompt: String,
    responses: Vec<ResponseRecord>,
    /// Ballot lines in the `.vote` format, e.g. `"4: A > B > C"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    jury: Option<Vec<String>>,
}

impl PromptCase {
    pub fn new(prompt: impl Into<String>, responses: Vec<ResponseRecord>, jury: Option<OrdinalProfile>) -> Result<Self> {
        let prompt = prompt.into();
        if responses.len() < 2 {
            return Err(Error::InvalidPipeline(format!("prompt {prompt:?} needs at least two responses")));
        }
        let q = responses[0].features.len();
        for (i, y) in responses.iter().enumerate() {
            if responses[..i].iter().any(|x| x.id == y.id) {
                return Err(Error::InvalidPipeline(format!("duplicate response id {}", y.id)));
            }
            if y.features.len() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    actual: y.features.len(),
                    context: "response features within a prompt",
                });
            }
            if y.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPipeline(format!("response {} has non-finite features", y.id)));
            }
        }
        if let Some(j) = &jury {
            let mut a: Vec<&Alternative> = j.alternatives().iter().collect();
            let mut b: Vec<&Alternative> = responses.iter().map(|y| &y.id).collect();
            a.sort();
            b.sort();
            if a != b {
                return Err(Error::InvalidPipeline(format!(
                    "jury ballots for {prompt:?} must rank exactly the response ids"
                )));
            }
        }
        Ok(PromptCase { prompt, responses, jury })
    }

    /// Jury built from ballot lines such as `"4: A > B > C"`.
    pub fn with_jury_lines(prompt: impl Into<String>, responses: Vec<ResponseRecord>, lines: &[String]) -> Result<Self> {
        let header: Vec<&str> = responses.iter().map(|y| y.id.as_str()).collect();
        let text = format!("alternatives: {}\n{}\n", header.join(", "), lines.join("\n"));
        let jury = parse_profile(&text)?;
        PromptCase::new(prompt, responses, Some(jury))
    }

    fn response_ids(&self) -> Vec<Alternative> {
        self.responses.iter().map(|y| y.id.clone()).collect()
    }

    fn texts(&self) -> HashMap<String, String> {
        self.responses.iter().map(|y| (y.id.to_string(), y.text.clone())).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardModel {
    /// Linear reward over response features.
    Fitted { weights: Vec<f64>, intercept: f64 },
    /// Cardinal aggregation of individual predictions over a population sample.
    Composed {
        psi: IndividualPreferenceModel,
        sample: Vec<EvaluatorFeatures>,
        rule: CardinalRuleId,
    },
}

impl RewardModel {
    pub fn evaluate(&self, y: &ResponseRecord) -> Result<f64> {
        evaluate_reward(self, y)
    }
}

/// Reward of a response. The prompt enters only through the response's features.
pub fn evaluate_reward(m: &RewardModel, y: &ResponseRecord) -> Result<f64> {
    match m {
        RewardModel::Fitted { weights, intercept } => {
            if weights.len() != y.features.len() {
                return Err(Error::DimensionMismatch {
                    expected: weights.len(),
                    actual: y.features.len(),
                    context: "reward weights vs response features",
                });
            }
            Ok(clamp_to_scale(weights.iter().zip(&y.features).map(|(w, g)| w * g).sum::<f64>() + intercept))
        }
        RewardModel::Composed { psi, sample, rule } => {
            let ratings = sample.iter().map(|f| predict_rating(psi, f, y)).collect::<Result<Vec<_>>>()?;
            rule.aggregate(&ratings)
        }
    }
}

/// Target score of collective-rank position `pos` among `n` responses.
pub fn rank_target(pos: usize, n: usize) -> f64 {
    10.0 * (n - 1 - pos) as f64 / (n - 1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseTargets {
    pub prompt: String,
    pub collective_ranking: Vec<Alternative>,
    pub targets: Vec<(Alternative, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankingFit {
    pub model: RewardModel,
    pub cases: Vec<CaseTargets>,
}

/// Aggregates each case's jury with `rule`, maps collective positions to
/// linear targets on `[0, 10]` and fits a linear reward with intercept.
pub fn rlchf_from_rankings(cases: &[PromptCase], rule: OrdinalRuleId, ridge_lambda: f64) -> Result<RankingFit> {
    if cases.is_empty() {
        return Err(Error::InvalidPipeline("no prompt cases".into()));
    }
    let q = cases[0].responses[0].features.len();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut summaries = Vec::with_capacity(cases.len());
    for case in cases {
        let jury = case
            .jury
            .as_ref()
            .ok_or_else(|| Error::InvalidPipeline(format!("prompt {:?} has no jury ballots", case.prompt)))?;
        let n = case.responses.len();
        if n < 2 {
            return Err(Error::InvalidPipeline(format!("prompt {:?} has a single response", case.prompt)));
        }
        let social = rule.apply(jury);
        let mut case_targets = Vec::with_capacity(n);
        for (pos, id) in social.ranking.iter().enumerate() {
            let y = case.responses.iter().find(|y| &y.id == id).expect("jury ranks the response ids");
            if y.features.len() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    actual: y.features.len(),
                    context: "response features across prompts",
                });
            }
            let t = rank_target(pos, n);
            rows.push(y.features.clone());
            targets.push(t);
            case_targets.push((id.clone(), t));
        }
        summaries.push(CaseTargets {
            prompt: case.prompt.clone(),
            collective_ranking: social.ranking,
            targets: case_targets,
        });
    }
    let (weights, intercept) = fit_linear(&rows, &targets, ridge_lambda)?;
    Ok(RankingFit {
        model: RewardModel::Fitted { weights, intercept },
        cases: summaries,
    })
}

/// Ridge regression with an unpenalized intercept, via centering.
fn fit_linear(rows: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    let n = rows.len() as f64;
    let q = rows[0].len();
    let mean_x: Vec<f64> = (0..q).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mean_t = targets.iter().sum::<f64>() / n;
    let centered: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean_x).map(|(v, m)| v - m).collect()).collect();
    let centered_t: Vec<f64> = targets.iter().map(|t| t - mean_t).collect();
    let weights = ridge(&centered, &centered_t, lambda)?;
    let intercept = mean_t - weights.iter().zip(&mean_x).map(|(w, m)| w * m).sum::<f64>();
    Ok((weights, intercept))
}

pub fn rlchf_from_features(
    psi: &IndividualPreferenceModel,
    sample: &[EvaluatorFeatures],
    rule: CardinalRuleId,
) -> Result<RewardModel> {
    if sample.is_empty() {
        return Err(Error::EmptyEvaluators);
    }
    psi.validate()?;
    if let Some(f) = sample.iter().find(|f| f.dim() != psi.evaluator_dim()) {
        return Err(Error::DimensionMismatch {
            expected: psi.evaluator_dim(),
            actual: f.dim(),
            context: "evaluator sample vs model",
        });
    }
    Ok(RewardModel::Composed {
        psi: psi.clone(),
        sample: sample.to_vec(),
        rule,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub temperature: f64,
}

impl SelectionPolicy {
    pub const GREEDY: SelectionPolicy = SelectionPolicy { temperature: 0.0 };
}

/// Greedy (`T = 0`, smallest id among ties) or softmax(`reward / T`) sampling.
pub fn select_response<'a>(
    m: &RewardModel,
    case: &'a PromptCase,
    policy: SelectionPolicy,
    seed: u64,
) -> Result<&'a ResponseRecord> {
    if case.responses.is_empty() {
        return Err(Error::InvalidPipeline("no responses to select from".into()));
    }
    if policy.temperature.is_nan() || policy.temperature < 0.0 {
        return Err(Error::InvalidPipeline("temperature must be non-negative".into()));
    }
    let mut ordered: Vec<&ResponseRecord> = case.responses.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let rewards = ordered.iter().map(|y| evaluate_reward(m, y)).collect::<Result<Vec<_>>>()?;
    let best = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if policy.temperature == 0.0 {
        let i = rewards.iter().position(|&r| r == best).expect("non-empty");
        return Ok(ordered[i]);
    }
    let weights: Vec<f64> = rewards.iter().map(|r| ((r - best) / policy.temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut rng = derived_rng(seed, "select", &[case.prompt.as_bytes()]);
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return Ok(ordered[i]);
        }
        u -= w;
    }
    Ok(ordered[ordered.len() - 1])
}

/// Social choice applied to a simulated population.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectiveRule {
    Single(OrdinalRuleId),
    KBorda(usize),
    GreedyCc(usize),
}

impl CollectiveRule {
    /// Parses `borda`, `ranked_pairs`, ..., `k_borda`, `greedy_cc`; the
    /// committee size `k` applies to the multi-winner rules.
    pub fn parse(name: &str, k: Option<usize>) -> Result<Self> {
        let norm = name.to_ascii_lowercase().replace('-', "_");
        let need_k = || k.ok_or_else(|| Error::InvalidPipeline(format!("rule {name} needs a committee size k")));
        match norm.as_str() {
            "k_borda" => Ok(CollectiveRule::KBorda(need_k()?)),
            "greedy_cc" | "cc" => Ok(CollectiveRule::GreedyCc(need_k()?)),
            _ => Ok(CollectiveRule::Single(OrdinalRuleId::from_str(&norm)?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectiveOutcome {
    Winner(Alternative),
    Committee(Committee),
}

/// The population's ratings of a case's responses under `psi`.
pub fn simulated_ratings(
    responses: &[ResponseRecord],
    psi: &IndividualPreferenceModel,
    sample: &[EvaluatorFeatures],
) -> Result<RatingProfile> {
    if sample.is_empty() {
        return Err(Error::EmptyEvaluators);
    }
    let rows = sample
        .iter()
        .map(|f| responses.iter().map(|y| predict_rating(psi, f, y)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    RatingProfile::new(
        responses.iter().map(|y| y.id.clone()).collect(),
        (0..sample.len()).map(|i| format!("e{i}")).collect(),
        rows,
    )
}

/// Each sampled evaluator ranks the responses by predicted rating (ties by
/// id) and `rule` elects a winner or committee.
pub fn simulate_collective_decision(
    case: &PromptCase,
    psi: &IndividualPreferenceModel,
    sample: &[EvaluatorFeatures],
    rule: CollectiveRule,
) -> Result<CollectiveOutcome> {
    if case.responses.len() < 2 {
        return Err(Error::InvalidPipeline("collective decisions need at least two responses".into()));
    }
    let profile = simulated_ratings(&case.responses, psi, sample)?.induced_profile();
    Ok(match rule {
        CollectiveRule::Single(r) => CollectiveOutcome::Winner(r.apply(&profile).winner().clone()),
        CollectiveRule::KBorda(k) => CollectiveOutcome::Committee(k_borda(&profile, k)?),
        CollectiveRule::GreedyCc(k) => CollectiveOutcome::Committee(greedy_cc(&profile, k)?),
    })
}

/// One supervised training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub prompt: String,
    /// Winning response id, or committee ids joined by `,`.
    pub chosen: String,
    /// Bulleted composition of a committee's texts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

impl SftRecord {
    fn from_outcome(case: &PromptCase, outcome: &CollectiveOutcome) -> Result<SftRecord> {
        Ok(match outcome {
            CollectiveOutcome::Winner(w) => SftRecord {
                prompt: case.prompt.clone(),
                chosen: w.to_string(),
                response: None,
            },
            CollectiveOutcome::Committee(c) => SftRecord {
                prompt: case.prompt.clone(),
                chosen: c.winners.iter().map(Alternative::as_str).collect::<Vec<_>>().join(","),
                response: Some(compose_multiwinner_response(c, &case.texts())?),
            },
        })
    }
}

pub fn emit_sft_dataset(
    cases: &[PromptCase],
    psi: &IndividualPreferenceModel,
    sample: &[EvaluatorFeatures],
    rule: CollectiveRule,
) -> Result<Vec<SftRecord>> {
    cases
        .iter()
        .map(|case| SftRecord::from_outcome(case, &simulate_collective_decision(case, psi, sample, rule)?))
        .collect()
}

/// One JSON object per line, each terminated by `\n`.
pub fn sft_jsonl(records: &[SftRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// Produces candidate responses for a prompt.
pub trait CandidateGenerator {
    fn generate(&self, prompt: &str, k: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<ResponseRecord>;
}

/// Returns the first `k` of a fixed candidate list.
#[derive(Clone, Debug)]
pub struct FixedCandidates(pub Vec<ResponseRecord>);

impl CandidateGenerator for FixedCandidates {
    fn generate(&self, _prompt: &str, k: usize, _rng: &mut rand_chacha::ChaCha8Rng) -> Vec<ResponseRecord> {
        self.0.iter().take(k).cloned().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InferenceChoice {
    pub candidates: Vec<Alternative>,
    pub outcome: CollectiveOutcome,
}

/// Samples `n` evaluators and `k` candidates for the prompt and returns the
/// simulated collective choice.
#[allow(clippy::too_many_arguments)]
pub fn inference_time_choice(
    prompt: &str,
    generator: &dyn CandidateGenerator,
    k: usize,
    spec: &PopulationSpec,
    n: usize,
    psi: &IndividualPreferenceModel,
    rule: CollectiveRule,
    seed: u64,
) -> Result<InferenceChoice> {
    if k < 2 {
        return Err(Error::InvalidPipeline(format!("need at least two candidates, asked for {k}")));
    }
    let sample = sample_population(spec, n, derive_seed(seed, "inference-population", &[prompt.as_bytes()]))?;
    let mut rng = derived_rng(seed, "generator", &[prompt.as_bytes()]);
    let candidates = generator.generate(prompt, k, &mut rng);
    if candidates.len() < 2 {
        return Err(Error::InvalidPipeline(format!(
            "candidate generator returned {} responses; at least two are required",
            candidates.len()
        )));
    }
    let case = PromptCase::new(prompt, candidates, None)?;
    let outcome = simulate_collective_decision(&case, psi, &sample, rule)?;
    Ok(InferenceChoice {
        candidates: case.response_ids(),
        outcome,
    })
}

// ---------------------------------------------------------------------------
// Config-driven runs
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Rankings,
    Features,
    Collective,
    Inference,
}

fn default_lambda() -> f64 {
    1e-6
}

fn default_training_evaluators() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub variant: Variant,
    #[serde(default, alias = "F")]
    pub ordinal_rule: Option<OrdinalRuleId>,
    #[serde(default, alias = "W")]
    pub cardinal_rule: Option<CardinalRuleId>,
    #[serde(default, alias = "C")]
    pub choice_rule: Option<String>,
    /// Committee size for multi-winner choice rules.
    #[serde(default)]
    pub k: Option<usize>,
    /// Size of the simulated evaluator sample.
    #[serde(default, alias = "N")]
    pub n: Option<usize>,
    /// Candidates drawn per prompt in the inference variant (default: all).
    #[serde(default)]
    pub candidates: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lambda")]
    pub ridge_lambda: f64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_training_evaluators")]
    pub training_evaluators: usize,
    /// Path of the simulation dataset, relative to the config file.
    pub dataset: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetJson {
    prompts: Vec<PromptCaseJson>,
    #[serde(default)]
    population: Option<PopulationSpec>,
    #[serde(default)]
    world: Option<GroundTruthWorld>,
    #[serde(default)]
    psi: Option<IndividualPreferenceModel>,
}

/// Prompts plus whatever population and model inputs the variants need.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationDataset {
    pub cases: Vec<PromptCase>,
    pub population: Option<PopulationSpec>,
    pub world: Option<GroundTruthWorld>,
    pub psi: Option<IndividualPreferenceModel>,
}

impl SimulationDataset {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DatasetJson = serde_json::from_str(text).map_err(|e| Error::InvalidPipeline(format!("dataset: {e}")))?;
        let cases = raw
            .prompts
            .into_iter()
            .map(|c| match c.jury {
                Some(lines) => PromptCase::with_jury_lines(c.prompt, c.responses, &lines),
                None => PromptCase::new(c.prompt, c.responses, None),
            })
            .collect::<Result<Vec<_>>>()?;
        if cases.is_empty() {
            return Err(Error::InvalidPipeline("dataset has no prompts".into()));
        }
        if let Some(p) = &raw.population {
            p.validate()?;
        }
        if let Some(w) = &raw.world {
            w.validate()?;
        }
        if let Some(psi) = &raw.psi {
            psi.validate()?;
        }
        Ok(SimulationDataset {
            cases,
            population: raw.population,
            world: raw.world,
            psi: raw.psi,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseResult {
    pub prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<(Alternative, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<(Alternative, f64)>>,
    pub chosen: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineRun {
    pub variant: Variant,
    pub cases: Vec<CaseResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_model: Option<RewardModel>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sft: Vec<SftRecord>,
}

impl PipelineRun {
    /// The file-level artifact: SFT records as JSONL for the collective
    /// variants, the reward model as JSON otherwise.
    pub fn artifact(&self) -> String {
        match &self.reward_model {
            Some(m) if self.sft.is_empty() => serde_json::to_string_pretty(m).expect("model serializes") + "\n",
            _ => sft_jsonl(&self.sft),
        }
    }
}

fn need<T: Clone>(v: &Option<T>, what: &str, variant: Variant) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::InvalidPipeline(format!("variant {variant:?} requires {what}")))
}

/// The individual model: given explicitly, or fitted to ratings simulated
/// from the ground-truth world over every response in the dataset.
fn obtain_psi(cfg: &PipelineConfig, data: &SimulationDataset, seed: u64) -> Result<IndividualPreferenceModel> {
    if let Some(psi) = &data.psi {
        return Ok(psi.clone());
    }
    let world = need(&data.world, "`psi` or `world` in the dataset", cfg.variant)?;
    let population = need(&data.population, "`population` in the dataset", cfg.variant)?;
    let trainers = sample_population(&population, cfg.training_evaluators, derive_seed(seed, "training-population", &[]))?;
    let mut samples: Vec<RatingSample> = Vec::new();
    for (ci, case) in data.cases.iter().enumerate() {
        // Each case has its own noise stream.
        let case_seed = derive_seed(seed, "training-noise", &[&(ci as u64).to_le_bytes()]);
        samples.extend(simulate_ratings(&world, &trainers, &case.responses, case_seed)?);
    }
    fit_individual_model(&samples, cfg.ridge_lambda)
}

fn rewards_of(model: &RewardModel, case: &PromptCase) -> Result<Vec<(Alternative, f64)>> {
    case.responses.iter().map(|y| Ok((y.id.clone(), evaluate_reward(model, y)?))).collect()
}

pub fn run_pipeline(cfg: &PipelineConfig, data: &SimulationDataset, seed: u64) -> Result<PipelineRun> {
    let policy = SelectionPolicy {
        temperature: cfg.temperature,
    };
    let case_seed = |ci: usize| derive_seed(seed, "case", &[&(ci as u64).to_le_bytes()]);
    match cfg.variant {
        Variant::Rankings => {
            let rule = need(&cfg.ordinal_rule, "an ordinal rule `F`", cfg.variant)?;
            let fit = rlchf_from_rankings(&data.cases, rule, cfg.ridge_lambda)?;
            let cases = data
                .cases
                .iter()
                .zip(&fit.cases)
                .enumerate()
                .map(|(ci, (case, t))| {
                    Ok(CaseResult {
                        prompt: case.prompt.clone(),
                        targets: Some(t.targets.clone()),
                        rewards: Some(rewards_of(&fit.model, case)?),
                        chosen: select_response(&fit.model, case, policy, case_seed(ci))?.id.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PipelineRun {
                variant: cfg.variant,
                cases,
                reward_model: Some(fit.model),
                sft: Vec::new(),
            })
        }
        Variant::Features => {
            let rule = need(&cfg.cardinal_rule, "a cardinal rule `W`", cfg.variant)?;
            let n = need(&cfg.n, "a sample size `N`", cfg.variant)?;
            let population = need(&data.population, "`population` in the dataset", cfg.variant)?;
            let psi = obtain_psi(cfg, data, seed)?;
            let sample = sample_population(&population, n, derive_seed(seed, "population", &[]))?;
            let model = rlchf_from_features(&psi, &sample, rule)?;
            let cases = data
                .cases
                .iter()
                .enumerate()
                .map(|(ci, case)| {
                    Ok(CaseResult {
                        prompt: case.prompt.clone(),
                        targets: None,
                        rewards: Some(rewards_of(&model, case)?),
                        chosen: select_response(&model, case, policy, case_seed(ci))?.id.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PipelineRun {
                variant: cfg.variant,
                cases,
                reward_model: Some(model),
                sft: Vec::new(),
            })
        }
        Variant::Collective => {
            let rule = CollectiveRule::parse(&need(&cfg.choice_rule, "a choice rule `C`", cfg.variant)?, cfg.k)?;
            let n = need(&cfg.n, "a sample size `N`", cfg.variant)?;
            let population = need(&data.population, "`population` in the dataset", cfg.variant)?;
            let psi = obtain_psi(cfg, data, seed)?;
            let sample = sample_population(&population, n, derive_seed(seed, "population", &[]))?;
            let sft = emit_sft_dataset(&data.cases, &psi, &sample, rule)?;
            Ok(PipelineRun {
                variant: cfg.variant,
                cases: sft
                    .iter()
                    .map(|r| CaseResult {
                        prompt: r.prompt.clone(),
                        targets: None,
                        rewards: None,
                        chosen: r.chosen.clone(),
                    })
                    .collect(),
                reward_model: None,
                sft,
            })
        }
        Variant::Inference => {
            let rule = CollectiveRule::parse(&need(&cfg.choice_rule, "a choice rule `C`", cfg.variant)?, cfg.k)?;
            let n = need(&cfg.n, "a sample size `N`", cfg.variant)?;
            let population = need(&data.population, "`population` in the dataset", cfg.variant)?;
            let psi = obtain_psi(cfg, data, seed)?;
            let mut sft = Vec::with_capacity(data.cases.len());
            for (ci, case) in data.cases.iter().enumerate() {
                let k = cfg.candidates.unwrap_or(case.responses.len());
                let generator = FixedCandidates(case.responses.clone());
                let choice = inference_time_choice(&case.prompt, &generator, k, &population, n, &psi, rule, case_seed(ci))?;
                sft.push(SftRecord::from_outcome(case, &choice.outcome)?);
            }
            Ok(PipelineRun {
                variant: cfg.variant,
                cases: sft
                    .iter()
                    .map(|r| CaseResult {
                        prompt: r.prompt.clone(),
                        targets: None,
                        rewards: None,
                        chosen: r.chosen.clone(),
                    })
                    .collect(),
                reward_model: None,
                sft,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::DINERS_BALLOTS;
    use crate::sim::{ComponentDist, PopulationGroup};

    pub(crate) fn one_hot_responses(ids: &[&str]) -> Vec<ResponseRecord> {
        ids.iter()
            .enumerate()
            .map(|(i, id)| ResponseRecord {
                id: Alternative::new(*id).unwrap(),
                text: format!("answer {id}"),
                features: (0..ids.len()).map(|j| if i == j { 1.0 } else { 0.0 }).collect(),
            })
            .collect()
    }

    fn diners_case() -> PromptCase {
        let lines: Vec<String> = DINERS_BALLOTS.lines().skip(1).map(str::to_string).collect();
        PromptCase::with_jury_lines("Where should we eat?", one_hot_responses(&["A", "B", "C"]), &lines).unwrap()
    }

    #[test]
    fn diners_borda_targets_and_fit() {
        let case = diners_case();
        let fit = rlchf_from_rankings(std::slice::from_ref(&case), OrdinalRuleId::Borda, 1e-9).unwrap();
        let t: Vec<(&str, f64)> = fit.cases[0].targets.iter().map(|(a, t)| (a.as_str(), *t)).collect();
        assert_eq!(t, [("C", 10.0), ("B", 5.0), ("A", 0.0)]);
        for (id, target) in [("A", 0.0), ("B", 5.0), ("C", 10.0)] {
            let y = case.responses.iter().find(|y| y.id.as_str() == id).unwrap();
            assert!((evaluate_reward(&fit.model, y).unwrap() - target).abs() < 1e-6);
        }
        assert_eq!(select_response(&fit.model, &case, SelectionPolicy::GREEDY, 0).unwrap().id.as_str(), "C");
    }

    #[test]
    fn rule_choice_changes_targets() {
        let case = diners_case();
        let order = |rule| {
            let fit = rlchf_from_rankings(std::slice::from_ref(&case), rule, 1e-9).unwrap();
            fit.cases[0].collective_ranking.iter().map(|a| a.to_string()).collect::<String>()
        };
        assert_eq!(order(OrdinalRuleId::Borda), "CBA");
        assert_eq!(order(OrdinalRuleId::RankedPairs), "BCA");
        assert_eq!(order(OrdinalRuleId::InstantRunoff), "ABC");
    }

    #[test]
    fn unanimous_two_response_jury() {
        let case = PromptCase::with_jury_lines("q", one_hot_responses(&["A", "B"]), &["5: A > B".to_string()]).unwrap();
        let fit = rlchf_from_rankings(&[case], OrdinalRuleId::Plurality, 1e-6).unwrap();
        let t: Vec<f64> = fit.cases[0].targets.iter().map(|x| x.1).collect();
        assert_eq!(t, [10.0, 0.0]);
    }

    #[test]
    fn rankings_require_a_jury() {
        let case = PromptCase::new("q", one_hot_responses(&["A", "B"]), None).unwrap();
        assert!(matches!(rlchf_from_rankings(&[case], OrdinalRuleId::Borda, 1.0), Err(Error::InvalidPipeline(_))));
        assert!(PromptCase::new("q", one_hot_responses(&["A"]), None).is_err());
    }

    #[test]
    fn jury_must_match_responses() {
        let lines = ["1: A > B > C".to_string()];
        assert!(PromptCase::with_jury_lines("q", one_hot_responses(&["A", "B"]), &lines).is_err());
    }

    #[test]
    fn composed_reward_single_evaluator_is_psi() {
        let psi = IndividualPreferenceModel::new(vec![vec![3.0, 9.0], vec![6.0, 1.0]]).unwrap();
        let f = EvaluatorFeatures::new(vec![0.2, 0.7]).unwrap();
        let m = rlchf_from_features(&psi, std::slice::from_ref(&f), CardinalRuleId::Median).unwrap();
        for y in one_hot_responses(&["a", "b"]) {
            assert_eq!(evaluate_reward(&m, &y).unwrap(), predict_rating(&psi, &f, &y).unwrap());
        }
        assert!(matches!(rlchf_from_features(&psi, &[], CardinalRuleId::Mean), Err(Error::EmptyEvaluators)));
    }

    #[test]
    fn composed_reward_mean_vs_median() {
        // d = 1: the evaluator feature scales the rating 10 * f.
        let psi = IndividualPreferenceModel::new(vec![vec![10.0]]).unwrap();
        let sample: Vec<EvaluatorFeatures> =
            [0.3, 0.6, 0.6].iter().map(|&v| EvaluatorFeatures::new(vec![v]).unwrap()).collect();
        let y = ResponseRecord { id: Alternative::new("y").unwrap(), text: String::new(), features: vec![1.0] };
        let mean = rlchf_from_features(&psi, &sample, CardinalRuleId::Mean).unwrap();
        let median = rlchf_from_features(&psi, &sample, CardinalRuleId::Median).unwrap();
        assert!((evaluate_reward(&mean, &y).unwrap() - 5.0).abs() < 1e-12);
        assert!((evaluate_reward(&median, &y).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn fitted_reward_constant_and_dimension_check() {
        let m = RewardModel::Fitted { weights: vec![0.0, 0.0], intercept: 5.0 };
        for y in one_hot_responses(&["a", "b"]) {
            assert_eq!(evaluate_reward(&m, &y).unwrap(), 5.0);
        }
        let bad = ResponseRecord { id: Alternative::new("z").unwrap(), text: String::new(), features: vec![1.0] };
        assert!(matches!(evaluate_reward(&m, &bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn greedy_selection_ties_go_to_smallest_id() {
        let case = PromptCase::new("q", one_hot_responses(&["b", "a", "c"]), None).unwrap();
        let m = RewardModel::Fitted { weights: vec![0.0; 3], intercept: 2.0 };
        assert_eq!(select_response(&m, &case, SelectionPolicy::GREEDY, 0).unwrap().id.as_str(), "a");
    }

    fn single_group(d: usize, value: f64) -> PopulationSpec {
        PopulationSpec {
            d,
            groups: vec![PopulationGroup {
                weight: 1.0,
                components: vec![ComponentDist::Fixed { value }; d],
            }],
            noise_sigma: 0.0,
        }
    }

    #[test]
    fn single_evaluator_collective_choice_is_their_favourite() {
        let psi = IndividualPreferenceModel::new(vec![vec![2.0, 8.0, 5.0]]).unwrap();
        let case = PromptCase::new("q", one_hot_responses(&["a", "b", "c"]), None).unwrap();
        let f = EvaluatorFeatures::new(vec![1.0]).unwrap();
        for rule in OrdinalRuleId::ALL {
            let out = simulate_collective_decision(&case, &psi, std::slice::from_ref(&f), CollectiveRule::Single(rule)).unwrap();
            assert_eq!(out, CollectiveOutcome::Winner(Alternative::new("b").unwrap()));
        }
        let choice = inference_time_choice(
            "q",
            &FixedCandidates(case.responses.clone()),
            3,
            &single_group(1, 1.0),
            1,
            &psi,
            CollectiveRule::Single(OrdinalRuleId::Borda),
            5,
        )
        .unwrap();
        assert_eq!(choice.outcome, CollectiveOutcome::Winner(Alternative::new("b").unwrap()));
    }

    #[test]
    fn committee_records_compose_texts() {
        let psi = IndividualPreferenceModel::new(vec![vec![2.0, 8.0, 5.0]]).unwrap();
        let case = PromptCase::new("q", one_hot_responses(&["a", "b", "c"]), None).unwrap();
        let sample = vec![EvaluatorFeatures::new(vec![1.0]).unwrap()];
        let sft = emit_sft_dataset(&[case], &psi, &sample, CollectiveRule::KBorda(3)).unwrap();
        assert_eq!(sft[0].chosen, "b,c,a");
        assert_eq!(
            sft[0].response.as_deref(),
            Some("The following are 3 typical answers to your question:\n- answer b\n- answer c\n- answer a")
        );
        assert_eq!(
            sft_jsonl(&sft[..1]).lines().next().unwrap(),
            r#"{"prompt":"q","chosen":"b,c,a","response":"The following are 3 typical answers to your question:\n- answer b\n- answer c\n- answer a"}"#
        );
    }

    #[test]
    fn degenerate_generators_are_rejected() {
        let psi = IndividualPreferenceModel::new(vec![vec![1.0, 1.0]]).unwrap();
        let one = FixedCandidates(one_hot_responses(&["a", "b"])[..1].to_vec());
        let spec = single_group(1, 1.0);
        let rule = CollectiveRule::Single(OrdinalRuleId::Borda);
        assert!(inference_time_choice("q", &one, 2, &spec, 3, &psi, rule, 0).is_err());
        let two = FixedCandidates(one_hot_responses(&["a", "b"]));
        assert!(inference_time_choice("q", &two, 1, &spec, 3, &psi, rule, 0).is_err());
        assert!(inference_time_choice("q", &two, 2, &spec, 3, &psi, rule, 0).is_ok());
    }

    #[test]
    fn collective_rule_names() {
        assert_eq!(CollectiveRule::parse("ranked-pairs", None).unwrap(), CollectiveRule::Single(OrdinalRuleId::RankedPairs));
        assert_eq!(CollectiveRule::parse("k_borda", Some(3)).unwrap(), CollectiveRule::KBorda(3));
        assert!(CollectiveRule::parse("greedy_cc", None).is_err());
        assert!(CollectiveRule::parse("kemeny", None).is_err());
    }
}
