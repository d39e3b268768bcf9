use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{Adam, Head, Loss, PolicyNet};
use super::replay::{Experience, PrioritizedReplay, SampledBatch};
use crate::error::{Error, Result};
use crate::hierarchy::NodeId;

pub const CHECKPOINT_FORMAT: &str = "hrlfs-brain/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionMode {
    UniformRandom,
    Sample,
    Greedy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnParams {
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnOutcome {
    pub actor_loss: f64,
    pub critic_loss: f64,
    /// `r + γ·V(s')` for every sample.
    pub td_targets: Vec<f64>,
    /// `|TD error| + 1e-6` for every sample.
    pub priorities: Vec<f64>,
}

/// Actor, critic, their optimizers and the replay memory of one tree node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentBrain {
    pub node: NodeId,
    pub actor: PolicyNet,
    pub critic: PolicyNet,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub replay: PrioritizedReplay,
}

impl AgentBrain {
    /// Networks of widths `[input, hidden.., 1]` initialized from `rng`.
    pub fn new<R: Rng + ?Sized>(
        node: NodeId,
        input_dim: usize,
        hidden: &[usize],
        replay_capacity: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let actor = PolicyNet::new(Head::Actor, &widths, rng)?;
        let critic = PolicyNet::new(Head::Critic, &widths, rng)?;
        Ok(Self {
            node,
            actor_opt: Adam::new(actor.n_params()),
            critic_opt: Adam::new(critic.n_params()),
            actor,
            critic,
            replay: PrioritizedReplay::new(replay_capacity),
        })
    }

    pub fn select_probability(&self, s: &[f64]) -> Result<f64> {
        self.actor.forward(s)
    }

    /// `true` means select.
    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], mode: ActionMode, rng: &mut R) -> Result<bool> {
        match mode {
            ActionMode::UniformRandom => Ok(rng.gen_bool(0.5)),
            ActionMode::Sample => {
                let p = self.actor.forward(s)?;
                Ok(rng.gen::<f64>() < p)
            }
            ActionMode::Greedy => Ok(self.actor.forward(s)? >= 0.5),
        }
    }

    pub fn remember(&mut self, exp: Experience) {
        self.replay.push(exp);
    }

    /// One actor-critic update on a sampled batch.
    ///
    /// The critic regresses `V(s)` onto `y = r + γ·V(s')`; the actor ascends
    /// `ln π(a|s)·A` with the one-step advantage `A = y − V(s)` held
    /// constant. Both terms are importance weighted and averaged. All
    /// targets use the parameters from before the update.
    pub fn learn(&mut self, batch: &SampledBatch, params: &LearnParams) -> Result<LearnOutcome> {
        let b = batch.experiences.len();
        if b == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut actor_grad = vec![0.0; self.actor.n_params()];
        let mut critic_grad = vec![0.0; self.critic.n_params()];
        let mut actor_loss = 0.0;
        let mut critic_loss = 0.0;
        let mut td_targets = Vec::with_capacity(b);
        let mut priorities = Vec::with_capacity(b);
        for (exp, &w) in batch.experiences.iter().zip(&batch.weights) {
            let v = self.critic.forward(&exp.state)?;
            let v_next = self.critic.forward(&exp.next_state)?;
            let y = exp.reward + params.gamma * v_next;
            let advantage = y - v;
            let weight = w / b as f64;

            let (lc, gc) = self.critic.gradient(&exp.state, Loss::Squared { target: y, weight })?;
            let (la, ga) = self.actor.gradient(
                &exp.state,
                Loss::LogProb {
                    action: exp.action,
                    advantage,
                    weight,
                },
            )?;
            critic_loss += lc;
            actor_loss += la;
            critic_grad.iter_mut().zip(&gc).for_each(|(a, g)| *a += g);
            actor_grad.iter_mut().zip(&ga).for_each(|(a, g)| *a += g);
            td_targets.push(y);
            priorities.push(advantage.abs() + 1e-6);
        }
        if !actor_loss.is_finite() || !critic_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "node {}: actor loss {actor_loss}, critic loss {critic_loss}",
                self.node
            )));
        }
        self.critic_opt.apply(&mut self.critic.params, &critic_grad, params.lr_critic);
        self.actor_opt.apply(&mut self.actor.params, &actor_grad, params.lr_actor);
        if !self.actor.is_finite() || !self.critic.is_finite() {
            return Err(Error::NonFinite(format!("node {}: parameters after update", self.node)));
        }
        Ok(LearnOutcome {
            actor_loss,
            critic_loss,
            td_targets,
            priorities,
        })
    }

    /// Samples from this brain's replay, learns, and writes back priorities.
    /// Returns `None` when the replay holds fewer than `minibatch` entries.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        minibatch: usize,
        per_alpha: f64,
        per_beta: f64,
        params: &LearnParams,
        rng: &mut R,
    ) -> Result<Option<LearnOutcome>> {
        if self.replay.len() < minibatch {
            return Ok(None);
        }
        let batch = self.replay.sample(minibatch, per_alpha, per_beta, rng)?;
        let outcome = self.learn(&batch, params)?;
        self.replay.update_priorities(&batch.indices, &outcome.priorities);
        Ok(Some(outcome))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = BrainCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            brain: self.clone(),
        };
        let text = serde_json::to_string(&ckpt)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: BrainCheckpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint format {:?}",
                ckpt.format
            )));
        }
        Ok(ckpt.brain)
    }
}

/// Versioned JSON dump of a brain (widths, parameters, Adam moments and
/// replay contents).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BrainCheckpoint {
    pub format: String,
    pub brain: AgentBrain,
}
