use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::ForestParams;
use crate::feature_state::embed::ProviderKind;

/// How the step reward is shared among activated agents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardAssign {
    /// Each activated agent receives `r / |activated|`.
    #[default]
    Split,
    /// Each activated agent receives the full `r`.
    Broadcast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: ProviderKind,
    pub base_url: String,
    pub model: String,
    /// Raw embedding dimension declared by the provider.
    pub dim: usize,
    pub cache: Option<PathBuf>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Zero,
            base_url: "https://api.openai.com/v1".into(),
            model: "text-embedding-3-small".into(),
            dim: 1536,
            cache: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub explore_epochs: usize,
    pub optimize_epochs: usize,
    pub replay_capacity: usize,
    pub minibatch: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub gamma: f64,
    /// Weight of the performance reward against the quantity reward.
    pub alpha: f64,
    /// Penalty on the selected count in the quantity reward.
    pub lambda: f64,
    pub k_max: usize,
    /// Depth (root = 1) at which nodes stop delegating.
    pub level_cap: Option<usize>,
    pub reward_assign: RewardAssign,
    pub per_alpha: f64,
    pub per_beta: f64,
    /// Fraction of rows held out for scoring subsets.
    pub holdout: f64,
    pub forest: ForestParams,
    pub seed: u64,
    /// Stores elapsed seconds in the report; off by default so reports stay
    /// byte-identical across runs.
    pub record_wall_clock: bool,
    pub embedding: EmbeddingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            explore_epochs: 200,
            optimize_epochs: 200,
            replay_capacity: 400,
            minibatch: 32,
            lr_actor: 0.001,
            lr_critic: 0.01,
            gamma: 0.9,
            alpha: 0.4,
            lambda: 0.6,
            k_max: 5,
            level_cap: None,
            reward_assign: RewardAssign::Split,
            per_alpha: 0.6,
            per_beta: 0.4,
            holdout: 0.2,
            forest: ForestParams::default(),
            seed: 0,
            record_wall_clock: false,
            embedding: EmbeddingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be a finite non-negative number", self.lambda));
        }
        if self.explore_epochs + self.optimize_epochs == 0 {
            return bad("at least one epoch is required".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.minibatch == 0 || self.replay_capacity < self.minibatch {
            return bad(format!(
                "minibatch {} must be positive and fit in replay capacity {}",
                self.minibatch, self.replay_capacity
            ));
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1".into());
        }
        if self.level_cap == Some(0) {
            return bad("level cap must be a positive integer".into());
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.per_alpha < 0.0 || self.per_beta < 0.0 {
            return bad("replay exponents must be non-negative".into());
        }
        self.forest.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        for c in [
            RunConfig { alpha: 1.5, ..Default::default() },
            RunConfig { lambda: -0.1, ..Default::default() },
            RunConfig { explore_epochs: 0, optimize_epochs: 0, ..Default::default() },
            RunConfig { level_cap: Some(0), ..Default::default() },
            RunConfig { minibatch: 500, ..Default::default() },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"alpha": 0.7, "forest": {"n_trees": 5}}"#).unwrap();
        assert_eq!(c.alpha, 0.7);
        assert_eq!(c.forest.n_trees, 5);
        assert_eq!(c.forest.max_depth, 12);
        assert_eq!(c.minibatch, 32);
        assert!(serde_json::from_str::<RunConfig>(r#"{"alpah": 0.7}"#).is_err());
    }
}
