//! Small fully connected networks with hand-written backprop and Adam.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest distance the actor probability keeps from 0 and 1.
const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Sigmoid of a single logit: probability of "select".
    Actor,
    /// Raw scalar value estimate.
    Critic,
}

/// Feed-forward net with ReLU hidden layers and one scalar output.
///
/// Parameters live in one flat vector; each layer stores its weights
/// row-major (`out × in`) followed by its biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub head: Head,
    pub widths: Vec<usize>,
    pub params: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Loss {
    /// `weight · (output − target)²` on the raw output.
    Squared { target: f64, weight: f64 },
    /// `−weight · advantage · ln π(action | s)` for the actor head.
    LogProb { action: bool, advantage: f64, weight: f64 },
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl PolicyNet {
    /// Weights and biases drawn uniformly from ±1/√fan_in.
    pub fn new<R: Rng + ?Sized>(head: Head, widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) || *widths.last().unwrap() != 1 {
            return Err(Error::InvalidArgument(format!(
                "layer widths {widths:?} must be positive and end in 1"
            )));
        }
        let mut params = Vec::with_capacity(param_count(widths));
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(rng.gen_range(-bound..=bound));
            }
        }
        Ok(Self {
            head,
            widths: widths.to_vec(),
            params,
        })
    }

    pub fn zeros(head: Head, widths: &[usize]) -> Self {
        Self {
            head,
            widths: widths.to_vec(),
            params: vec![0.0; param_count(widths)],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: s.len(),
                context: "network input".into(),
            });
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    /// Activations of every layer; the last holds the single raw output.
    fn activations(&self, s: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![s.to_vec()];
        let mut offset = 0;
        let last = self.widths.len() - 2;
        for (l, w) in self.widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let input = &acts[l];
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let z = biases[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if l < last { z.max(0.0) } else { z }
                })
                .collect();
            acts.push(out);
            offset += n_in * n_out + n_out;
        }
        acts
    }

    /// Raw output before the head's squashing.
    pub fn raw_output(&self, s: &[f64]) -> Result<f64> {
        self.check_input(s)?;
        Ok(self.activations(s).last().unwrap()[0])
    }

    /// Actor: probability of select, strictly inside (0, 1). Critic: V(s).
    pub fn forward(&self, s: &[f64]) -> Result<f64> {
        let raw = self.raw_output(s)?;
        Ok(match self.head {
            Head::Actor => sigmoid(raw).clamp(PROB_EPS, 1.0 - PROB_EPS),
            Head::Critic => raw,
        })
    }

    /// Loss value and its exact gradient with respect to every parameter.
    pub fn gradient(&self, s: &[f64], loss: Loss) -> Result<(f64, Vec<f64>)> {
        self.check_input(s)?;
        let acts = self.activations(s);
        let raw = acts.last().unwrap()[0];
        let (value, d_raw) = match loss {
            Loss::Squared { target, weight } => {
                let diff = raw - target;
                (weight * diff * diff, 2.0 * weight * diff)
            }
            Loss::LogProb {
                action,
                advantage,
                weight,
            } => {
                // ln σ(x) = −softplus(−x), ln(1 − σ(x)) = −softplus(x)
                let (log_pi, dlog) = if action {
                    (-softplus(-raw), 1.0 - sigmoid(raw))
                } else {
                    (-softplus(raw), -sigmoid(raw))
                };
                (-weight * advantage * log_pi, -weight * advantage * dlog)
            }
        };
        if !value.is_finite() || !d_raw.is_finite() {
            return Err(Error::NonFinite(format!("loss {value}")));
        }

        let mut grad = vec![0.0; self.params.len()];
        let mut delta = vec![d_raw];
        let mut offset = self.params.len();
        let n_layers = self.widths.len() - 1;
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            offset -= n_in * n_out + n_out;
            let input = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = offset + o * n_in;
                for i in 0..n_in {
                    grad[row + i] = d * input[i];
                }
                grad[offset + n_in * n_out + o] = d;
            }
            if l > 0 {
                let weights = &self.params[offset..offset + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        if input[i] <= 0.0 {
                            return 0.0;
                        }
                        (0..n_out).map(|o| weights[o * n_in + i] * delta[o]).sum()
                    })
                    .collect();
            }
        }
        Ok((value, grad))
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// Descends along `grad`.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network() {
        let s = [0.3, -1.0, 2.0];
        assert_eq!(PolicyNet::zeros(Head::Actor, &[3, 4, 1]).forward(&s).unwrap(), 0.5);
        assert_eq!(PolicyNet::zeros(Head::Critic, &[3, 4, 1]).forward(&s).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_2_2_1() {
        // hidden: relu([1,-1;0.5,2]·x + [0.1,-0.2]), out: [1,-2]·h + 0.3
        let params = vec![1.0, -1.0, 0.5, 2.0, 0.1, -0.2, 1.0, -2.0, 0.3];
        let net = PolicyNet {
            head: Head::Critic,
            widths: vec![2, 2, 1],
            params,
        };
        // x = [2, 1]: z1 = 2 - 1 + 0.1 = 1.1, z2 = 1 + 2 - 0.2 = 2.8
        // out = 1.1 - 5.6 + 0.3 = -4.2
        assert!((net.forward(&[2.0, 1.0]).unwrap() + 4.2).abs() < 1e-12);
        // x = [-1, 0]: z1 = -0.9 -> 0, z2 = -0.7 -> 0, out = 0.3
        assert!((net.forward(&[-1.0, 0.0]).unwrap() - 0.3).abs() < 1e-12);
        let actor = PolicyNet { head: Head::Actor, ..net };
        assert!((actor.forward(&[2.0, 1.0]).unwrap() - 1.0 / (1.0 + 4.2f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn deterministic_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = PolicyNet::new(Head::Actor, &[5, 64, 8, 1], &mut rng).unwrap();
        let s = [0.1, 0.2, -0.3, 0.4, 0.0];
        assert_eq!(net.forward(&s).unwrap(), net.forward(&s).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let net = PolicyNet::zeros(Head::Critic, &[2, 3, 1]);
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(net.forward(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_loss_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = PolicyNet::new(Head::Critic, &[4, 6, 3, 1], &mut rng).unwrap();
        let s = [0.5, -0.5, 1.0, 0.2];
        let target = net.forward(&s).unwrap();
        let (l, g) = net.gradient(&s, Loss::Squared { target, weight: 1.0 }).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_is_linear_in_loss_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = PolicyNet::new(Head::Actor, &[4, 6, 3, 1], &mut rng).unwrap();
        let s = [0.5, -0.5, 1.0, 0.2];
        let (l1, g1) = net.gradient(&s, Loss::LogProb { action: true, advantage: 0.7, weight: 1.0 }).unwrap();
        let (l3, g3) = net.gradient(&s, Loss::LogProb { action: true, advantage: 0.7, weight: 3.0 }).unwrap();
        assert!((l3 - 3.0 * l1).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g3) {
            assert!((b - 3.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut adam = Adam::new(2);
        let mut p = vec![1.0, -1.0];
        adam.apply(&mut p, &[0.5, -2.0], 0.1);
        // first bias-corrected step is lr · sign(g)
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
    }
}
