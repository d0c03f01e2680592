//! Rollout collection and PPO updates against a vector environment.

use std::collections::VecDeque;

use envbridge_core::client::{ClientError, VecEnv};
use envbridge_core::protocol::PartValues;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gae::{compute_gae, normalize_advantages};
use crate::model::{clip_grad_norm, ppo_loss, ActorCritic, Batch, LossConfig};
use crate::optim::Adam;

/// Completed episodes averaged into `mean_return`.
pub const RETURN_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub rollout_length: usize,
    pub minibatches: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub total_frames: u64,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            rollout_length: 128,
            minibatches: 8,
            epochs: 4,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            vf_coef: 0.5,
            ent_coef: 0.005,
            learning_rate: 3e-4,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            total_frames: 300_000,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn loss(&self) -> LossConfig {
        LossConfig { clip: self.clip, vf_coef: self.vf_coef, ent_coef: self.ent_coef }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::Config(what.to_owned()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("discount must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("GAE lambda must be in [0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip range must be positive");
        }
        if self.rollout_length == 0 || self.minibatches == 0 || self.epochs == 0 {
            return bad("rollout length, minibatches and epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.max_grad_norm > 0.0) {
            return bad("learning rate and gradient clip must be positive");
        }
        Ok(())
    }

    /// Environment frames consumed by one rollout.
    pub fn frames_per_rollout(&self, n_agents: usize, action_repeat: u32) -> u64 {
        (self.rollout_length * n_agents) as u64 * u64::from(action_repeat)
    }
}

/// One row per optimization update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub frames: u64,
    /// Mean of the last 50 completed episode returns; NaN until one completes.
    pub mean_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Negated mean policy entropy.
    pub entropy_loss: f64,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("frame budget {budget} is smaller than one rollout ({rollout} frames)")]
    Budget { budget: u64, rollout: u64 },
    #[error("update {update}: non-finite {what}")]
    NonFinite { update: usize, what: &'static str },
    #[error(transparent)]
    Env(#[from] ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl TrainError {
    pub fn is_usage(&self) -> bool {
        match self {
            TrainError::Config(_) | TrainError::Budget { .. } => true,
            TrainError::Env(e) => e.is_usage(),
            _ => false,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: ActorCritic,
    pub history: Vec<TrainStats>,
}

struct Rollout {
    obs: Vec<f64>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
}

/// Train from scratch; `on_update` sees every stats row as soon as it exists.
pub fn train<V, F>(env: &mut V, config: &PpoConfig, mut on_update: F) -> Result<TrainOutcome, TrainError>
where
    V: VecEnv + ?Sized,
    F: FnMut(&TrainStats) -> Result<(), TrainError>,
{
    config.validate()?;
    let spec = env.spec().clone();
    let n = spec.total_agents();
    let rollout_frames = config.frames_per_rollout(n, spec.action_repeat);
    if config.total_frames < rollout_frames {
        return Err(TrainError::Budget { budget: config.total_frames, rollout: rollout_frames });
    }
    let updates = (config.total_frames / rollout_frames) as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ActorCritic::new(&spec.obs_space, &spec.action_space, &config.hidden, &mut rng);
    let mut adam = Adam::new(model.n_params(), config.learning_rate);
    let obs_dim = model.obs_dim();
    let aw = model.head.action_width();
    let t_len = config.rollout_length;
    let loss_cfg = config.loss();

    let mut raw_obs = Vec::with_capacity(n * obs_dim);
    let flatten = |obs: &[PartValues], out: &mut Vec<f64>| {
        out.clear();
        for o in obs {
            spec.obs_space.flatten_into(o, out);
        }
    };
    flatten(&env.reset(config.seed)?, &mut raw_obs);

    let mut episode_returns = vec![0.0; n];
    let mut completed: VecDeque<f64> = VecDeque::with_capacity(RETURN_WINDOW);
    let mut history = Vec::with_capacity(updates);
    let mut frames = 0u64;
    let mut actions = Vec::with_capacity(n);

    for update in 0..updates {
        let mut ro = Rollout {
            obs: Vec::with_capacity(t_len * n * obs_dim),
            actions: Vec::with_capacity(t_len * n * aw),
            log_probs: Vec::with_capacity(t_len * n),
            values: Vec::with_capacity((t_len + 1) * n),
            rewards: Vec::with_capacity(t_len * n),
            dones: Vec::with_capacity(t_len * n),
        };
        for _ in 0..t_len {
            model.obs_norm.update(&raw_obs);
            let start = ro.obs.len();
            for row in raw_obs.chunks_exact(obs_dim) {
                model.obs_norm.normalize_into(row, &mut ro.obs);
            }
            actions.clear();
            for a in 0..n {
                let obs = &ro.obs[start + a * obs_dim..start + (a + 1) * obs_dim];
                let col = ro.actions.len();
                let (logp, value) = model.act(obs, &mut rng, &mut ro.actions);
                ro.log_probs.push(logp);
                ro.values.push(value);
                actions.push(model.head.to_env_action(&ro.actions[col..]));
            }
            let transitions = env.step(&actions)?;
            let next: Vec<PartValues> = transitions.iter().map(|t| t.obs.clone()).collect();
            flatten(&next, &mut raw_obs);
            for (a, t) in transitions.iter().enumerate() {
                ro.rewards.push(t.reward);
                ro.dones.push(t.done);
                episode_returns[a] += t.reward;
                if t.done {
                    if completed.len() == RETURN_WINDOW {
                        completed.pop_front();
                    }
                    completed.push_back(episode_returns[a]);
                    episode_returns[a] = 0.0;
                }
            }
        }
        let mut normalized = Vec::with_capacity(obs_dim);
        for row in raw_obs.chunks_exact(obs_dim) {
            normalized.clear();
            model.obs_norm.normalize_into(row, &mut normalized);
            ro.values.push(model.value_of(&normalized));
        }
        frames += rollout_frames;

        // Per-agent GAE over the time-major buffers.
        let mut advantages = vec![0.0; t_len * n];
        let mut returns = vec![0.0; t_len * n];
        for a in 0..n {
            let rewards: Vec<f64> = (0..t_len).map(|t| ro.rewards[t * n + a]).collect();
            let dones: Vec<bool> = (0..t_len).map(|t| ro.dones[t * n + a]).collect();
            let values: Vec<f64> = (0..=t_len).map(|t| ro.values[t * n + a]).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, config.gamma, config.lambda)
                .expect("rollout buffers have consistent lengths");
            for t in 0..t_len {
                advantages[t * n + a] = adv[t];
                returns[t * n + a] = ret[t];
            }
        }
        normalize_advantages(&mut advantages);

        let batch = Batch {
            obs: &ro.obs,
            actions: &ro.actions,
            old_log_probs: &ro.log_probs,
            advantages: &advantages,
            returns: &returns,
        };
        let mut order: Vec<usize> = (0..t_len * n).collect();
        let mb_size = order.len().div_ceil(config.minibatches);
        let mut grad = vec![0.0; model.n_params()];
        let (mut pl, mut vl, mut ent, mut count) = (0.0, 0.0, 0.0, 0usize);
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for idx in order.chunks(mb_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let terms = ppo_loss(&model, &batch, idx, &loss_cfg, Some(&mut grad));
                if !terms.total.is_finite() {
                    return Err(TrainError::NonFinite { update, what: "loss" });
                }
                if !clip_grad_norm(&mut grad, config.max_grad_norm).is_finite() {
                    return Err(TrainError::NonFinite { update, what: "gradient" });
                }
                adam.step(&mut model.param_blocks_mut(), &grad);
                pl += terms.policy_loss;
                vl += terms.value_loss;
                ent += terms.entropy;
                count += 1;
            }
        }
        let c = count as f64;
        let mean_return = if completed.is_empty() {
            f64::NAN
        } else {
            completed.iter().sum::<f64>() / completed.len() as f64
        };
        let stats = TrainStats { frames, mean_return, policy_loss: pl / c, value_loss: vl / c, entropy_loss: -ent / c };
        on_update(&stats)?;
        history.push(stats);
    }
    Ok(TrainOutcome { model, history })
}

/// Train while appending every stats row to a CSV file (header first).
pub fn train_to_csv<V: VecEnv + ?Sized>(
    env: &mut V,
    config: &PpoConfig,
    csv_path: &std::path::Path,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let spec = env.spec();
    let rollout = config.frames_per_rollout(spec.total_agents(), spec.action_repeat);
    if config.total_frames < rollout {
        return Err(TrainError::Budget { budget: config.total_frames, rollout });
    }
    let mut writer = csv::Writer::from_path(csv_path)?;
    let outcome = train(env, config, |row| {
        writer.serialize(row)?;
        writer.flush()?;
        Ok(())
    })?;
    Ok(outcome)
}
