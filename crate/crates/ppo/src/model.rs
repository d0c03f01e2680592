//! Actor-critic networks and the clipped PPO objective.

use envbridge_core::protocol::SpaceSpec;
use rand::Rng;

use crate::dist::ActionHead;
use crate::nn::{Mlp, Trace};
use crate::optim::RunningMeanStd;

/// Separate policy and value networks over normalized observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub obs_space: SpaceSpec,
    pub action_space: SpaceSpec,
    pub head: ActionHead,
    pub policy: Mlp,
    pub log_std: Vec<f64>,
    pub value: Mlp,
    pub obs_norm: RunningMeanStd,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(obs_space: &SpaceSpec, action_space: &SpaceSpec, hidden: &[usize], rng: &mut R) -> Self {
        let head = ActionHead::new(action_space);
        let obs_dim = obs_space.flat_width();
        let policy = Mlp::new(&layer_sizes(obs_dim, hidden, head.net_outputs()), 0.01, rng);
        let value = Mlp::new(&layer_sizes(obs_dim, hidden, 1), 1.0, rng);
        Self {
            obs_space: obs_space.clone(),
            action_space: action_space.clone(),
            log_std: vec![0.0; head.log_std_len()],
            head,
            policy,
            value,
            obs_norm: RunningMeanStd::new(obs_dim),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn n_params(&self) -> usize {
        self.policy.params().len() + self.log_std.len() + self.value.params().len()
    }

    /// Trainable parameters in gradient order: policy net, log-std, value net.
    pub fn params(&self) -> Vec<f64> {
        [self.policy.params(), &self.log_std, self.value.params()].concat()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let (p, rest) = flat.split_at(self.policy.params().len());
        let (s, v) = rest.split_at(self.log_std.len());
        self.policy.params_mut().copy_from_slice(p);
        self.log_std.copy_from_slice(s);
        self.value.params_mut().copy_from_slice(v);
    }

    pub fn param_blocks_mut(&mut self) -> [&mut [f64]; 3] {
        [self.policy.params_mut(), &mut self.log_std, self.value.params_mut()]
    }

    /// Sample a raw action for a normalized observation; returns (log-prob, value).
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R, raw: &mut Vec<f64>) -> (f64, f64) {
        let out = self.policy.output(obs);
        let start = raw.len();
        self.head.sample(&out, &self.log_std, rng, raw);
        let logp = self.head.log_prob(&out, &self.log_std, &raw[start..]);
        (logp, self.value_of(obs))
    }

    pub fn act_deterministic(&self, obs: &[f64], raw: &mut Vec<f64>) {
        self.head.mode(&self.policy.output(obs), raw);
    }

    pub fn value_of(&self, obs: &[f64]) -> f64 {
        self.value.output(obs)[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
}

/// A flat rollout batch. Rows of `obs` are already normalized.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub obs: &'a [f64],
    pub actions: &'a [f64],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    /// Negated clipped surrogate.
    pub policy_loss: f64,
    /// Mean squared value error (before the coefficient).
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
}

/// `policy_loss + vf_coef·value_loss − ent_coef·entropy` averaged over `idx`,
/// with its gradient added into `grad` (layout of [`ActorCritic::params`]).
pub fn ppo_loss(
    model: &ActorCritic,
    batch: &Batch,
    idx: &[usize],
    cfg: &LossConfig,
    mut grad: Option<&mut [f64]>,
) -> LossTerms {
    let obs_dim = model.obs_dim();
    let aw = model.head.action_width();
    let n_policy = model.policy.params().len();
    let n_std = model.log_std.len();
    let inv_b = 1.0 / idx.len() as f64;
    let mut terms = LossTerms::default();
    let mut trace = Trace::default();
    let mut grad_out = vec![0.0; model.head.net_outputs()];

    for &i in idx {
        let obs = &batch.obs[i * obs_dim..(i + 1) * obs_dim];
        let raw = &batch.actions[i * aw..(i + 1) * aw];
        let adv = batch.advantages[i];

        model.policy.forward(obs, &mut trace);
        let out = trace.output();
        let logp = model.head.log_prob(out, &model.log_std, raw);
        let ratio = (logp - batch.old_log_probs[i]).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
        terms.policy_loss -= unclipped.min(clipped) * inv_b;
        let entropy = model.head.entropy(out, &model.log_std);
        terms.entropy += entropy * inv_b;

        let v = model.value_of(obs);
        let err = v - batch.returns[i];
        terms.value_loss += err * err * inv_b;

        if let Some(grad) = grad.as_deref_mut() {
            let (g_policy, rest) = grad.split_at_mut(n_policy);
            let (g_std, g_value) = rest.split_at_mut(n_std);
            // The min picks the unclipped branch whenever it is the smaller one.
            let c_logp = if unclipped <= clipped { -adv * ratio * inv_b } else { 0.0 };
            let c_ent = -cfg.ent_coef * inv_b;
            grad_out.iter_mut().for_each(|g| *g = 0.0);
            model.head.backward(out, &model.log_std, raw, c_logp, c_ent, &mut grad_out, g_std);
            model.policy.backward(&trace, &grad_out, g_policy);

            model.value.forward(obs, &mut trace);
            model.value.backward(&trace, &[2.0 * cfg.vf_coef * err * inv_b], g_value);
        }
    }
    terms.total = terms.policy_loss + cfg.vf_coef * terms.value_loss - cfg.ent_coef * terms.entropy;
    terms
}

/// Scale `grad` down so its L2 norm is at most `max_norm`; returns the norm before scaling.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}
