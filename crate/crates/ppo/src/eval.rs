//! Episode-return measurement for trained and random policies.

use envbridge_core::client::{ClientError, VecEnv};
use envbridge_core::protocol::PartValues;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::ActorCritic;

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSummary {
    pub returns: Vec<f64>,
}

impl ReturnSummary {
    pub fn mean(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / self.returns.len() as f64).sqrt()
    }
}

/// Run `policy` until `episodes` returns are collected.
///
/// Every agent contributes its first `⌈episodes / N⌉` episodes, taken
/// round-robin, so short episodes are not over-represented.
pub fn collect_episodes<V, F>(env: &mut V, episodes: usize, seed: u64, mut policy: F) -> Result<ReturnSummary, ClientError>
where
    V: VecEnv + ?Sized,
    F: FnMut(&[PartValues]) -> Vec<PartValues>,
{
    assert!(episodes > 0);
    let n = env.num_agents();
    let quota = episodes.div_ceil(n);
    let mut per_agent: Vec<Vec<f64>> = vec![Vec::with_capacity(quota); n];
    let mut running = vec![0.0; n];
    let mut obs = env.reset(seed)?;
    while per_agent.iter().any(|r| r.len() < quota) {
        let actions = policy(&obs);
        let transitions = env.step(&actions)?;
        for (a, t) in transitions.iter().enumerate() {
            running[a] += t.reward;
            if t.done {
                if per_agent[a].len() < quota {
                    per_agent[a].push(running[a]);
                }
                running[a] = 0.0;
            }
        }
        obs = transitions.into_iter().map(|t| t.obs).collect();
    }
    let returns = (0..quota).flat_map(|j| per_agent.iter().map(move |r| r[j])).take(episodes).collect();
    Ok(ReturnSummary { returns })
}

/// Returns of the uniform-random policy, the reference point for learning.
pub fn random_baseline<V: VecEnv + ?Sized>(env: &mut V, episodes: usize, seed: u64) -> Result<ReturnSummary, ClientError> {
    let space = env.spec().action_space.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    collect_episodes(env, episodes, seed, |obs| obs.iter().map(|_| space.sample(&mut rng)).collect())
}

/// Returns of a trained policy, acting on its mean action when `deterministic`.
pub fn evaluate<V: VecEnv + ?Sized>(
    env: &mut V,
    model: &ActorCritic,
    episodes: usize,
    seed: u64,
    deterministic: bool,
) -> Result<ReturnSummary, ClientError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = Vec::new();
    let mut normalized = Vec::new();
    let mut raw = Vec::new();
    collect_episodes(env, episodes, seed, |obs| {
        obs.iter()
            .map(|o| {
                flat.clear();
                model.obs_space.flatten_into(o, &mut flat);
                normalized.clear();
                model.obs_norm.normalize_into(&flat, &mut normalized);
                raw.clear();
                if deterministic {
                    model.act_deterministic(&normalized, &mut raw);
                } else {
                    model.act(&normalized, &mut rng, &mut raw);
                }
                model.head.to_env_action(&raw)
            })
            .collect()
    })
}
