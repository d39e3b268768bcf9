//! Expected number of activated agents when every internal node delegates
//! to both children with probability `p`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AgentTree;
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Recurrence `E(N) = 1 + 2p·E(N/2)`, `E(1) = 1`, unrolled over a perfect
/// tree with `height` levels.
pub fn expected_active(height: usize, p: f64) -> Result<f64> {
    check_probability(p)?;
    if height == 0 {
        return Err(Error::InvalidArgument("height must be at least 1".into()));
    }
    Ok((1..height).fold(1.0, |e, _| 1.0 + 2.0 * p * e))
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Monte-Carlo estimate of the activated-node count on `tree`.
///
/// Each trial counts the root, and every counted internal node activates
/// both children with probability `p`. Trials use per-trial derived seeds so
/// the result does not depend on thread scheduling.
pub fn simulate_active(tree: &AgentTree, p: f64, trials: usize, seed: u64) -> Result<SimulationResult> {
    check_probability(p)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let counts: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from(seed, &[0x51u64, t as u64]);
            let mut stack = vec![tree.root];
            let mut count = 0usize;
            while let Some(id) = stack.pop() {
                count += 1;
                if let Some([a, b]) = tree.nodes[id].children {
                    if rng.gen_bool(p) {
                        stack.push(a);
                        stack.push(b);
                    }
                }
            }
            count as f64
        })
        .collect();
    let n = trials as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = if trials > 1 {
        counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(SimulationResult {
        mean,
        std_error: (var / n).sqrt(),
        trials,
    })
}
