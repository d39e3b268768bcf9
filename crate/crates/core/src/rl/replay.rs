use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CAPACITY: usize = 400;
const PRIORITY_EPS: f64 = 1e-6;

/// One transition `(s_t, a_t, r_t, s_{t+1})`. States are shared between
/// every agent that acted in the same step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: Arc<[f64]>,
    pub action: bool,
    pub reward: f64,
    pub next_state: Arc<[f64]>,
}

/// Fixed-capacity FIFO buffer with proportional prioritized sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrioritizedReplay {
    capacity: usize,
    items: VecDeque<Experience>,
    priorities: VecDeque<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledBatch {
    pub experiences: Vec<Experience>,
    /// Importance weights normalized so the largest is 1.
    pub weights: Vec<f64>,
    pub indices: Vec<usize>,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
            priorities: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    pub fn priorities(&self) -> impl Iterator<Item = f64> + '_ {
        self.priorities.iter().copied()
    }

    /// Appends with the current maximum priority (1.0 when empty), evicting
    /// the oldest entry at capacity.
    pub fn push(&mut self, exp: Experience) {
        let p = self.priorities.iter().copied().fold(f64::NAN, f64::max);
        let p = if p.is_nan() { 1.0 } else { p };
        if self.items.len() == self.capacity {
            self.items.pop_front();
            self.priorities.pop_front();
        }
        self.items.push_back(exp);
        self.priorities.push_back(p);
    }

    /// Sampling distribution `p_i^α / Σ p_j^α`.
    pub fn probabilities(&self, alpha: f64) -> Vec<f64> {
        let scaled: Vec<f64> = self.priorities.iter().map(|p| p.powf(alpha)).collect();
        let total: f64 = scaled.iter().sum();
        scaled.iter().map(|s| s / total).collect()
    }

    /// Draws `batch` entries with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, alpha: f64, beta: f64, rng: &mut R) -> Result<SampledBatch> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::InsufficientSamples {
                available: self.items.len(),
                requested: batch,
            });
        }
        let probs = self.probabilities(alpha);
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        let size = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let u = rng.gen::<f64>() * acc;
            let i = cumulative.partition_point(|&c| c <= u).min(probs.len() - 1);
            indices.push(i);
            weights.push((size * probs[i]).powf(-beta));
        }
        let max_w = weights.iter().copied().fold(0.0, f64::max);
        weights.iter_mut().for_each(|w| *w /= max_w);
        Ok(SampledBatch {
            experiences: indices.iter().map(|&i| self.items[i].clone()).collect(),
            weights,
            indices,
        })
    }

    /// Sets priorities after a learning step. Non-positive or non-finite
    /// values are replaced by a small positive floor.
    pub fn update_priorities(&mut self, indices: &[usize], priorities: &[f64]) {
        for (&i, &p) in indices.iter().zip(priorities) {
            if let Some(slot) = self.priorities.get_mut(i) {
                *slot = if p.is_finite() && p > 0.0 { p } else { PRIORITY_EPS };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(tag: f64) -> Experience {
        Experience {
            state: Arc::from(vec![tag]),
            action: true,
            reward: tag,
            next_state: Arc::from(vec![tag]),
        }
    }

    #[test]
    fn evicts_oldest_at_capacity() {
        let mut r = PrioritizedReplay::new(DEFAULT_CAPACITY);
        for i in 0..401 {
            r.push(exp(i as f64));
        }
        assert_eq!(r.len(), 400);
        assert_eq!(r.get(0).unwrap().reward, 1.0);
        assert!((0..r.len()).all(|i| r.get(i).unwrap().reward != 0.0));
    }

    #[test]
    fn first_push_gets_unit_priority() {
        let mut r = PrioritizedReplay::new(4);
        r.push(exp(0.0));
        assert_eq!(r.len(), 1);
        assert_eq!(r.priorities().collect::<Vec<_>>(), vec![1.0]);
        r.update_priorities(&[0], &[2.5]);
        r.push(exp(1.0));
        assert_eq!(r.priorities().collect::<Vec<_>>(), vec![2.5, 2.5]);
    }

    #[test]
    fn equal_priorities_are_uniform() {
        let mut r = PrioritizedReplay::new(8);
        for i in 0..5 {
            r.push(exp(i as f64));
        }
        for p in r.probabilities(0.6) {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_zero_ignores_priorities() {
        let mut r = PrioritizedReplay::new(8);
        for i in 0..4 {
            r.push(exp(i as f64));
        }
        r.update_priorities(&[0, 1, 2, 3], &[0.1, 5.0, 1.0, 30.0]);
        for p in r.probabilities(0.0) {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn proportional_sampling_frequency() {
        let mut r = PrioritizedReplay::new(8);
        r.push(exp(0.0));
        r.push(exp(1.0));
        r.update_priorities(&[0, 1], &[1.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let draws = 30_000;
        let second = (0..draws)
            .filter(|_| r.sample(1, 1.0, 0.4, &mut rng).unwrap().indices[0] == 1)
            .count();
        let frac = second as f64 / draws as f64;
        assert!((frac - 0.75).abs() < 0.02, "{frac}");
    }

    #[test]
    fn beta_zero_gives_unit_weights() {
        let mut r = PrioritizedReplay::new(8);
        for i in 0..6 {
            r.push(exp(i as f64));
        }
        r.update_priorities(&[0, 1, 2], &[0.1, 5.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = r.sample(6, 0.6, 0.0, &mut rng).unwrap();
        assert!(b.weights.iter().all(|&w| w == 1.0));
        let b = r.sample(6, 0.6, 0.4, &mut rng).unwrap();
        assert!(b.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
    }

    #[test]
    fn insufficient_samples() {
        let mut r = PrioritizedReplay::new(8);
        r.push(exp(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(r.sample(2, 0.6, 0.4, &mut rng), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn lossless_below_capacity() {
        let mut r = PrioritizedReplay::new(10);
        for i in 0..10 {
            r.push(exp(i as f64));
        }
        let rewards: Vec<f64> = (0..10).map(|i| r.get(i).unwrap().reward).collect();
        assert_eq!(rewards, (0..10).map(|i| i as f64).collect::<Vec<_>>());
    }
}
