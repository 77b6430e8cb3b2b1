//! Synthetic streams and model-level datasets with known ground truth.

mod cohort;
mod logistic;
mod scenario;
mod series;

pub use cohort::{gen_survival_cohort, quantile_cohort, CohortTruth};
pub use logistic::{gen_logistic_stream, horizon, logistic_curve, poisson_logistic_curve, LogisticTruth};
pub use scenario::{
    gen_debate_scenario, Component, FollowerDist, GroundTruth, MinuteTotals, Novelty, PlantedTag, ScenarioSpec, TagTruth,
    DEBATE_START,
};
pub use series::{gen_armax_series, ArmaxTruth};
