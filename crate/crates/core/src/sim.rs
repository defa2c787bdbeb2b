//! Synthetic evaluator populations and individual preference models.
//!
//! Evaluators carry a feature vector `f` in `[0, 1]^d`, responses a feature
//! vector `g` in `R^q`. The synthetic world rates a response with the bilinear
//! utility `f' M g` plus Gaussian noise, clamped to the rating scale, and the
//! individual preference model fits its own matrix by ridge regression on the
//! vectorized outer products `f g'`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::cardinal::{clamp_to_scale, RatingProfile};
use crate::error::{Error, Result};
use crate::linalg::ridge;
use crate::profile::Alternative;
use crate::seed::derived_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EvaluatorFeatures(Vec<f64>);

impl EvaluatorFeatures {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if let Some(bad) = components.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidPopulation(format!("feature component {bad} outside [0, 1]")));
        }
        Ok(EvaluatorFeatures(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for EvaluatorFeatures {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        EvaluatorFeatures::new(v)
    }
}

impl From<EvaluatorFeatures> for Vec<f64> {
    fn from(f: EvaluatorFeatures) -> Self {
        f.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub id: Alternative,
    #[serde(default)]
    pub text: String,
    pub features: Vec<f64>,
}

/// Distribution of one feature component within a population group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentDist {
    Uniform { lo: f64, hi: f64 },
    Beta { alpha: f64, beta: f64 },
    Fixed { value: f64 },
}

impl ComponentDist {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ComponentDist::Uniform { lo, hi } => (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi,
            ComponentDist::Beta { alpha, beta } => alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite(),
            ComponentDist::Fixed { value } => (0.0..=1.0).contains(&value),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidPopulation(format!("invalid component distribution {self:?}")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            ComponentDist::Uniform { lo, hi } if lo == hi => lo,
            ComponentDist::Uniform { lo, hi } => Uniform::new_inclusive(lo, hi).expect("validated bounds").sample(rng),
            ComponentDist::Beta { alpha, beta } => Beta::new(alpha, beta).expect("validated parameters").sample(rng),
            ComponentDist::Fixed { value } => value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationGroup {
    pub weight: f64,
    pub components: Vec<ComponentDist>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub d: usize,
    pub groups: Vec<PopulationGroup>,
    #[serde(default)]
    pub noise_sigma: f64,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::InvalidPopulation("no groups".into()));
        }
        if self.groups.iter().any(|g| !(g.weight > 0.0 && g.weight.is_finite())) {
            return Err(Error::InvalidPopulation("group weights must be positive".into()));
        }
        let total: f64 = self.groups.iter().map(|g| g.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPopulation(format!("group weights sum to {total}, not 1")));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidPopulation("noise_sigma must be non-negative".into()));
        }
        for g in &self.groups {
            if g.components.len() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    actual: g.components.len(),
                    context: "population group components",
                });
            }
            g.components.iter().try_for_each(ComponentDist::validate)?;
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` seats by `weights`; the leftover
/// seats go to the largest fractional parts, lower index first on ties.
pub fn group_quotas(weights: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut by_remainder: Vec<usize> = (0..weights.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &g in by_remainder.iter().cycle().take(n.saturating_sub(assigned)) {
        quotas[g] += 1;
    }
    quotas
}

/// Stratified sample: every group receives its quota of evaluators, listed
/// group by group. Deterministic in `(spec, n, seed)`.
pub fn sample_population(spec: &PopulationSpec, n: usize, seed: u64) -> Result<Vec<EvaluatorFeatures>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidPopulation("sample size must be at least 1".into()));
    }
    let weights: Vec<f64> = spec.groups.iter().map(|g| g.weight).collect();
    let quotas = group_quotas(&weights, n);
    let mut out = Vec::with_capacity(n);
    for (gi, (group, &quota)) in spec.groups.iter().zip(&quotas).enumerate() {
        let mut rng = derived_rng(seed, "population", &[&(gi as u64).to_le_bytes()]);
        for _ in 0..quota {
            let f = group.components.iter().map(|c| c.sample(&mut rng).clamp(0.0, 1.0)).collect();
            out.push(EvaluatorFeatures(f));
        }
    }
    Ok(out)
}

fn check_matrix(m: &[Vec<f64>], name: &str) -> Result<(usize, usize)> {
    let d = m.len();
    let q = m.first().map_or(0, Vec::len);
    if d == 0 || q == 0 {
        return Err(Error::InvalidModel(format!("{name} must be non-empty")));
    }
    if m.iter().any(|r| r.len() != q) {
        return Err(Error::InvalidModel(format!("{name} rows differ in length")));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel(format!("{name} has non-finite entries")));
    }
    Ok((d, q))
}

fn bilinear(m: &[Vec<f64>], f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            actual: f.len(),
            context: "evaluator features",
        });
    }
    let q = m[0].len();
    if g.len() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            actual: g.len(),
            context: "response features",
        });
    }
    Ok(m.iter().zip(f).map(|(row, fi)| fi * row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()).sum())
}

/// Ground-truth bilinear utilities of the synthetic world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthWorld {
    pub m_star: Vec<Vec<f64>>,
    #[serde(default)]
    pub noise_sigma: f64,
}

impl GroundTruthWorld {
    pub fn new(m_star: Vec<Vec<f64>>, noise_sigma: f64) -> Result<Self> {
        let w = GroundTruthWorld { m_star, noise_sigma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        check_matrix(&self.m_star, "m_star")?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidModel("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Identifies the noise stream of one (evaluator, response) rating.
#[derive(Clone, Copy, Debug)]
pub struct NoiseKey<'a> {
    pub seed: u64,
    pub evaluator: u64,
    pub response: &'a str,
}

pub fn true_rating(w: &GroundTruthWorld, f: &EvaluatorFeatures, y: &ResponseRecord, key: NoiseKey<'_>) -> Result<f64> {
    let utility = bilinear(&w.m_star, f.as_slice(), &y.features)?;
    let noise = if w.noise_sigma > 0.0 {
        let mut rng = derived_rng(key.seed, "noise", &[&key.evaluator.to_le_bytes(), key.response.as_bytes()]);
        Normal::new(0.0, w.noise_sigma).expect("validated sigma").sample(&mut rng)
    } else {
        0.0
    };
    Ok(clamp_to_scale(utility + noise))
}

/// One observed rating used to fit an individual preference model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingSample {
    pub evaluator: EvaluatorFeatures,
    pub response: Vec<f64>,
    pub rating: f64,
}

/// Rates every response by every evaluator in the synthetic world.
pub fn simulate_ratings(
    w: &GroundTruthWorld,
    evaluators: &[EvaluatorFeatures],
    responses: &[ResponseRecord],
    seed: u64,
) -> Result<Vec<RatingSample>> {
    let mut out = Vec::with_capacity(evaluators.len() * responses.len());
    for (i, f) in evaluators.iter().enumerate() {
        for y in responses {
            let key = NoiseKey {
                seed,
                evaluator: i as u64,
                response: y.id.as_str(),
            };
            out.push(RatingSample {
                evaluator: f.clone(),
                response: y.features.clone(),
                rating: true_rating(w, f, y, key)?,
            });
        }
    }
    Ok(out)
}

/// The fitted individual preference model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndividualPreferenceModel {
    pub m_hat: Vec<Vec<f64>>,
    #[serde(default)]
    pub ridge_lambda: f64,
}

impl IndividualPreferenceModel {
    pub fn new(m_hat: Vec<Vec<f64>>) -> Result<Self> {
        check_matrix(&m_hat, "m_hat")?;
        Ok(IndividualPreferenceModel { m_hat, ridge_lambda: 0.0 })
    }

    pub fn validate(&self) -> Result<()> {
        check_matrix(&self.m_hat, "m_hat").map(|_| ())
    }

    pub fn evaluator_dim(&self) -> usize {
        self.m_hat.len()
    }

    pub fn response_dim(&self) -> usize {
        self.m_hat[0].len()
    }
}

pub fn fit_individual_model(samples: &[RatingSample], ridge_lambda: f64) -> Result<IndividualPreferenceModel> {
    let first = samples.first().ok_or_else(|| Error::InvalidModel("no training samples".into()))?;
    let (d, q) = (first.evaluator.dim(), first.response.len());
    if d == 0 || q == 0 {
        return Err(Error::InvalidModel("feature vectors must be non-empty".into()));
    }
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        if s.evaluator.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: s.evaluator.dim(),
                context: "evaluator features",
            });
        }
        if s.response.len() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                actual: s.response.len(),
                context: "response features",
            });
        }
        // Row-major vec(f g').
        rows.push(
            s.evaluator
                .as_slice()
                .iter()
                .flat_map(|fi| s.response.iter().map(move |gj| fi * gj))
                .collect::<Vec<f64>>(),
        );
    }
    let targets: Vec<f64> = samples.iter().map(|s| s.rating).collect();
    let theta = ridge(&rows, &targets, ridge_lambda)?;
    Ok(IndividualPreferenceModel {
        m_hat: theta.chunks(q).map(<[f64]>::to_vec).collect(),
        ridge_lambda,
    })
}

pub fn predict_rating(psi: &IndividualPreferenceModel, f: &EvaluatorFeatures, y: &ResponseRecord) -> Result<f64> {
    Ok(clamp_to_scale(bilinear(&psi.m_hat, f.as_slice(), &y.features)?))
}

/// An ethical principle acting as a voter: a linear score over response features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Principle {
    pub name: String,
    pub weights: Vec<f64>,
}

/// Ratings of every response by every principle.
pub fn principle_panel(principles: &[Principle], responses: &[ResponseRecord]) -> Result<RatingProfile> {
    if principles.is_empty() {
        return Err(Error::EmptyEvaluators);
    }
    let mut rows = Vec::with_capacity(principles.len());
    for c in principles {
        if c.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidModel(format!("principle {} has non-finite weights", c.name)));
        }
        let row = responses
            .iter()
            .map(|y| {
                if y.features.len() != c.weights.len() {
                    return Err(Error::DimensionMismatch {
                        expected: c.weights.len(),
                        actual: y.features.len(),
                        context: "principle weights vs response features",
                    });
                }
                Ok(clamp_to_scale(c.weights.iter().zip(&y.features).map(|(w, g)| w * g).sum()))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    RatingProfile::new(
        responses.iter().map(|y| y.id.clone()).collect(),
        principles.iter().map(|c| c.name.clone()).collect(),
        rows,
    )
}
