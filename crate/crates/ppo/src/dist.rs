//! Per-part action distributions over a network's output vector.
//!
//! Box parts are diagonal Gaussians with a state-independent log-std; the
//! sample is squashed by tanh into the part's bounds only when it is handed to
//! the environment, so log-probabilities are those of the unsquashed sample.
//! Discrete parts are categoricals over logits. Parts are independent.

use std::f64::consts::PI;

use envbridge_core::protocol::{PartKind, PartValue, PartValues, SpaceSpec};
use rand::Rng;
use rand_distr::StandardNormal;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
enum Part {
    Gaussian { name: String, out: usize, std: usize, width: usize, low: f64, high: f64 },
    Categorical { name: String, out: usize, n: usize },
}

/// Maps a network output (and log-std vector) to a joint action distribution.
///
/// Raw actions are flat: box parts contribute their unsquashed sample, discrete
/// parts one entry holding the category index.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionHead {
    parts: Vec<Part>,
    net_outputs: usize,
    log_std_len: usize,
    action_width: usize,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl ActionHead {
    pub fn new(space: &SpaceSpec) -> Self {
        let (mut out, mut std, mut action_width) = (0, 0, 0);
        let mut parts = Vec::new();
        for p in space.parts() {
            let name = p.name().to_owned();
            match *p.kind() {
                PartKind::Box { low, high, .. } => {
                    let width = p.flat_width();
                    parts.push(Part::Gaussian { name, out, std, width, low, high });
                    out += width;
                    std += width;
                    action_width += width;
                }
                PartKind::Discrete { n } => {
                    parts.push(Part::Categorical { name, out, n: n as usize });
                    out += n as usize;
                    action_width += 1;
                }
            }
        }
        Self { parts, net_outputs: out, log_std_len: std, action_width }
    }

    /// Width of the policy network's output layer.
    pub fn net_outputs(&self) -> usize {
        self.net_outputs
    }

    pub fn log_std_len(&self) -> usize {
        self.log_std_len
    }

    pub fn action_width(&self) -> usize {
        self.action_width
    }

    pub fn n_parts(&self) -> usize {
        self.parts.len()
    }

    /// Column of raw-action part `i` starts here.
    fn action_offsets(&self) -> impl Iterator<Item = (usize, &Part)> {
        self.parts.iter().scan(0, |col, part| {
            let start = *col;
            *col += match part {
                Part::Gaussian { width, .. } => *width,
                Part::Categorical { .. } => 1,
            };
            Some((start, part))
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, out: &[f64], log_std: &[f64], rng: &mut R, raw: &mut Vec<f64>) {
        for part in &self.parts {
            match part {
                Part::Gaussian { out: o, std, width, .. } => {
                    for k in 0..*width {
                        let eps: f64 = rng.sample(StandardNormal);
                        raw.push(out[o + k] + log_std[std + k].exp() * eps);
                    }
                }
                Part::Categorical { out: o, n, .. } => {
                    let logp = log_softmax(&out[*o..o + n]);
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = n - 1;
                    for (k, lp) in logp.iter().enumerate() {
                        acc += lp.exp();
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    raw.push(pick as f64);
                }
            }
        }
    }

    /// Deterministic action: Gaussian means and categorical argmax.
    pub fn mode(&self, out: &[f64], raw: &mut Vec<f64>) {
        for part in &self.parts {
            match part {
                Part::Gaussian { out: o, width, .. } => raw.extend_from_slice(&out[*o..o + width]),
                Part::Categorical { out: o, n, .. } => {
                    let logits = &out[*o..o + n];
                    let best = (0..*n).fold(0, |b, k| if logits[k] > logits[b] { k } else { b });
                    raw.push(best as f64);
                }
            }
        }
    }

    /// Log-density of each part separately, in part order.
    pub fn part_log_probs(&self, out: &[f64], log_std: &[f64], raw: &[f64]) -> Vec<f64> {
        self.action_offsets()
            .map(|(col, part)| match part {
                Part::Gaussian { out: o, std, width, .. } => (0..*width)
                    .map(|k| {
                        let ls = log_std[std + k];
                        let z = (raw[col + k] - out[o + k]) / ls.exp();
                        -0.5 * z * z - ls - HALF_LOG_2PI
                    })
                    .sum(),
                Part::Categorical { out: o, n, .. } => log_softmax(&out[*o..o + n])[raw[col] as usize],
            })
            .collect()
    }

    pub fn log_prob(&self, out: &[f64], log_std: &[f64], raw: &[f64]) -> f64 {
        self.part_log_probs(out, log_std, raw).iter().sum()
    }

    pub fn part_entropies(&self, out: &[f64], log_std: &[f64]) -> Vec<f64> {
        self.parts
            .iter()
            .map(|part| match part {
                Part::Gaussian { std, width, .. } => {
                    log_std[*std..std + width].iter().map(|ls| 0.5 * (2.0 * PI * std::f64::consts::E).ln() + ls).sum()
                }
                Part::Categorical { out: o, n, .. } => {
                    let logp = log_softmax(&out[*o..o + n]);
                    -logp.iter().map(|lp| lp.exp() * lp).sum::<f64>()
                }
            })
            .collect()
    }

    pub fn entropy(&self, out: &[f64], log_std: &[f64]) -> f64 {
        self.part_entropies(out, log_std).iter().sum()
    }

    /// Accumulate gradients of `c_logp·log p(raw) + c_ent·H` with respect to the
    /// network output and the log-std vector.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        out: &[f64],
        log_std: &[f64],
        raw: &[f64],
        c_logp: f64,
        c_ent: f64,
        grad_out: &mut [f64],
        grad_log_std: &mut [f64],
    ) {
        for (col, part) in self.action_offsets() {
            match part {
                Part::Gaussian { out: o, std, width, .. } => {
                    for k in 0..*width {
                        let ls = log_std[std + k];
                        let inv_var = (-2.0 * ls).exp();
                        let diff = raw[col + k] - out[o + k];
                        grad_out[o + k] += c_logp * diff * inv_var;
                        grad_log_std[std + k] += c_logp * (diff * diff * inv_var - 1.0) + c_ent;
                    }
                }
                Part::Categorical { out: o, n, .. } => {
                    let logp = log_softmax(&out[*o..o + n]);
                    let h = -logp.iter().map(|lp| lp.exp() * lp).sum::<f64>();
                    let a = raw[col] as usize;
                    for (k, lp) in logp.iter().enumerate() {
                        let p = lp.exp();
                        let onehot = if k == a { 1.0 } else { 0.0 };
                        grad_out[o + k] += c_logp * (onehot - p) - c_ent * p * (lp + h);
                    }
                }
            }
        }
    }

    /// Map a raw action into the environment's action space.
    pub fn to_env_action(&self, raw: &[f64]) -> PartValues {
        let mut values = PartValues::with_capacity(self.parts.len());
        for (col, part) in self.action_offsets() {
            match part {
                Part::Gaussian { name, width, low, high, .. } => {
                    let squashed = raw[col..col + width]
                        .iter()
                        .map(|u| (low + (u.tanh() + 1.0) * 0.5 * (high - low)).clamp(*low, *high))
                        .collect();
                    values.push(name.clone(), PartValue::Box(squashed));
                }
                Part::Categorical { name, .. } => values.push(name.clone(), PartValue::Discrete(raw[col] as i64)),
            }
        }
        values
    }
}
