//! Generalized advantage estimation and per-update advantage normalization.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GaeError {
    #[error("need {expected} values (one per reward plus a bootstrap), got {found}")]
    Values { expected: usize, found: usize },
    #[error("{rewards} rewards but {dones} done flags")]
    Dones { rewards: usize, dones: usize },
}

/// Advantages and returns for one agent's rollout.
///
/// `values` has one entry per step plus the bootstrap value of the state after
/// the last step. A `done` at step `t` cuts both the bootstrap and the trace.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), GaeError> {
    let t_len = rewards.len();
    if values.len() != t_len + 1 {
        return Err(GaeError::Values { expected: t_len + 1, found: values.len() });
    }
    if dones.len() != t_len {
        return Err(GaeError::Dones { rewards: t_len, dones: dones.len() });
    }
    let mut advantages = vec![0.0; t_len];
    let mut next = 0.0;
    for t in (0..t_len).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        advantages[t] = next;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shift to mean 0 and scale to (population) std 1. A constant batch is only centred.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in advantages.iter_mut() {
        *a -= mean;
        if std > 1e-12 {
            *a /= std;
        }
    }
}
