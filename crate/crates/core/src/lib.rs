//! Social choice rules, feedback parsing and simulated preference learning
//! for aggregating human feedback.

pub mod audits;
pub mod cardinal;
pub mod error;
pub mod feedback;
pub mod fixtures;
pub mod judgment;
pub mod linalg;
pub mod ordinal;
pub mod pipeline;
pub mod profile;
pub mod seed;
pub mod sim;

pub use audits::{
    anonymity_check, clone_test, manipulation_search_cardinal, manipulation_search_ordinal, AuditedRule, CloneOrders,
    CloneSpec, CloneVerdict, ManipulationWitness, SearchLimits,
};
pub use cardinal::{aggregate_ratings, greedy_cc, k_borda, CardinalRuleId, Committee, RatingProfile};
pub use error::{Error, ParseError, Result};
pub use feedback::{compile_constraints, interpret_rating, parse_feedback, FeedbackStatement, PartialPreference};
pub use judgment::{check_consistency, closest_consistent, majority_judgments, Agenda, JudgmentProfile, JudgmentSet};
pub use ordinal::{random_dictator, Lottery, OrdinalRuleId, SocialRanking};
pub use pipeline::{
    evaluate_reward, run_pipeline, PipelineConfig, PipelineRun, PromptCase, RewardModel, SftRecord, SimulationDataset,
};
pub use profile::{
    detect_cycles, format_profile, margin_matrix, parse_profile, Alternative, CycleReport, MarginMatrix, OrdinalProfile,
    RankingBallot,
};
pub use sim::{EvaluatorFeatures, IndividualPreferenceModel, PopulationSpec, ResponseRecord};
