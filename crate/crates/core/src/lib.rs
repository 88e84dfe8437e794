//! Unified matrix factorization for personalized, group, package and
//! package-to-group recommendation.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod factorization;
pub mod fixtures;
pub mod grouping;
pub mod prediction;
pub mod splits;

pub use data::{load_movielens, MovieLensFormat, Rating, RatingMatrix};
pub use error::{Error, Result};
pub use factorization::{train, FactorModel, ModelKind, Problem, TrainConfig};
pub use experiment::{run_experiment, Dataset, ExperimentConfig, ExperimentOutcome, RunRecord};
pub use evaluation::{mae_rmse, precision_at_k, MetricReport};
pub use grouping::{build_affinity, edge_weight, spectral_partition, AffinityMatrix, Axis, Partition};
pub use prediction::{predict_for_split, OrdinalAggregation, Prediction, PredictionRequest, Strategy};
pub use splits::{Fraction, Scenario, ScenarioSplit, TestEntry};
