use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::dataset::TaskKind;
use crate::evaluator::MetricKind;
use crate::hierarchy::{NodeId, TreeExport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Explore,
    Optimize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub phase: Phase,
    pub mask_hex: String,
    pub n_selected: usize,
    pub r_perf: f64,
    pub r_quantity: f64,
    pub r_total: f64,
    pub activated: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestSubset {
    pub step: usize,
    pub mask_hex: String,
    pub features: Vec<String>,
    pub metric: f64,
}

/// Work counters, plus elapsed seconds when enabled in the config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub forest_fits: usize,
    pub cache_hits: usize,
    pub learn_calls: usize,
    /// Experiences stored across all brains (one per activated agent per
    /// step).
    pub experiences: usize,
    pub wall_clock_secs: Option<WallClock>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    /// Split, feature states and tree.
    pub prepare: f64,
    pub explore: f64,
    pub optimize: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanActivated {
    pub explore: Option<f64>,
    pub optimize: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub task: TaskKind,
    pub metric: MetricKind,
    pub feature_names: Vec<String>,
    /// Mixture size shared by every feature.
    pub k: usize,
    pub tree: TreeExport,
    pub steps: Vec<StepRecord>,
    /// Best non-empty subset by validation metric, fewer features winning
    /// ties; `None` if every step dropped everything.
    pub best: Option<BestSubset>,
    /// Validation metric of the forest trained on every feature.
    pub full_set_metric: f64,
    /// Steps whose performance reward was negative (possible with 1-RAE).
    pub negative_r_perf_steps: Vec<usize>,
    pub timing: Timing,
    pub mean_activated: MeanActivated,
}

impl RunReport {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
