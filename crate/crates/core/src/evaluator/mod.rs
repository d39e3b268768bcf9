//! Downstream random forest and the evaluation metrics.

pub mod forest;
pub mod metrics;

pub use forest::{train_forest, DecisionTree, ForestModel, ForestParams};
pub use metrics::MetricKind;
