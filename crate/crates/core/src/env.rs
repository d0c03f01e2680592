//! Fixed-timestep environments, duplicated agents and lockstep stepping.
//!
//! An [`AgentPool`] owns `n_agents` independent copies of one environment.
//! Each pool step applies every agent's action for `action_repeat` physics
//! ticks (stopping early on termination), sums the tick rewards, and
//! auto-resets agents whose episode ended.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::protocol::{PartValues, SpaceSpec, Transition, Violation};

/// Per-agent random stream.
pub type AgentRng = ChaCha8Rng;

/// splitmix64 finalizer applied to a single input word.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for agent `index` of a pool reset with `seed`.
pub fn agent_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed.wrapping_add(index as u64))
}

pub fn agent_rng(seed: u64, index: usize) -> AgentRng {
    AgentRng::seed_from_u64(agent_seed(seed, index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvDefinition {
    pub name: String,
    pub obs_space: SpaceSpec,
    pub action_space: SpaceSpec,
    /// Seconds per physics tick.
    pub physics_dt: f64,
    /// Policy steps per episode before truncation.
    pub max_episode_steps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutcome {
    pub reward: f64,
    pub terminal: bool,
}

/// A single-agent simulation advanced one fixed tick at a time.
///
/// Implementations must be pure functions of (state, action, rng draws) so
/// that identical seeds and actions reproduce identical trajectories.
pub trait Environment: Send + Sync {
    type State: Clone + Send + fmt::Debug;
    type Action: Send;

    fn definition(&self) -> &EnvDefinition;

    /// Decode an action that already validated against the action space.
    fn parse_action(&self, action: &PartValues) -> Self::Action;

    fn reset(&self, rng: &mut AgentRng) -> Self::State;

    fn tick(&self, state: &mut Self::State, action: &Self::Action, rng: &mut AgentRng) -> TickOutcome;

    /// Append the flat observation (obs-space part order) to `out`.
    fn observe(&self, state: &Self::State, out: &mut Vec<f64>);

    fn observation(&self, state: &Self::State) -> PartValues {
        let mut flat = Vec::with_capacity(self.definition().obs_space.flat_width());
        self.observe(state, &mut flat);
        self.definition().obs_space.unflatten(&flat)
    }
}

#[derive(Debug, Clone)]
pub struct AgentInstance<S> {
    pub state: S,
    pub rng: AgentRng,
    pub episode_steps: u32,
    pub episode_return: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    #[error("step before reset")]
    NotReset,
    #[error("expected {expected} actions, got {found}")]
    WrongAgentCount { expected: usize, found: usize },
    #[error("agent {agent}: invalid action: {}", join(.violations))]
    InvalidAction { agent: usize, violations: Vec<Violation> },
}

fn join(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Episode-end bookkeeping kept for diagnostics; the wire only carries `done`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PoolStats {
    pub terminated: u64,
    pub truncated: u64,
    pub policy_steps: u64,
    pub ticks: u64,
}

pub struct AgentPool<E: Environment> {
    env: E,
    agents: Vec<AgentInstance<E::State>>,
    n_agents: usize,
    action_repeat: u32,
    max_episode_steps: u32,
    stats: PoolStats,
}

impl<E: Environment> AgentPool<E> {
    pub fn new(env: E, n_agents: usize, action_repeat: u32) -> Self {
        assert!(n_agents >= 1, "a pool needs at least one agent");
        assert!(action_repeat >= 1, "action_repeat must be positive");
        let max_episode_steps = env.definition().max_episode_steps;
        Self { env, agents: Vec::new(), n_agents, action_repeat, max_episode_steps, stats: PoolStats::default() }
    }

    /// Override the truncation limit (in policy steps).
    pub fn with_max_episode_steps(mut self, steps: u32) -> Self {
        assert!(steps >= 1);
        self.max_episode_steps = steps;
        self
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn agents(&self) -> &[AgentInstance<E::State>] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentInstance<E::State>] {
        &mut self.agents
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn action_repeat(&self) -> u32 {
        self.action_repeat
    }

    pub fn is_reset(&self) -> bool {
        !self.agents.is_empty()
    }

    pub fn stats(&self) -> PoolStats {
        self.stats
    }

    /// Start a fresh episode for every agent; agent `i` draws from `splitmix64(seed + i)`.
    pub fn reset(&mut self, seed: u64) -> Vec<PartValues> {
        self.agents = (0..self.n_agents)
            .map(|i| {
                let mut rng = agent_rng(seed, i);
                let state = self.env.reset(&mut rng);
                AgentInstance { state, rng, episode_steps: 0, episode_return: 0.0 }
            })
            .collect();
        self.agents.iter().map(|a| self.env.observation(&a.state)).collect()
    }

    /// Advance every agent by one policy step. Either all agents step or none do.
    pub fn step(&mut self, actions: &[PartValues]) -> Result<Vec<Transition>, StepError> {
        if self.agents.is_empty() {
            return Err(StepError::NotReset);
        }
        if actions.len() != self.n_agents {
            return Err(StepError::WrongAgentCount { expected: self.n_agents, found: actions.len() });
        }
        let space = &self.env.definition().action_space;
        for (agent, action) in actions.iter().enumerate() {
            space.validate(action).map_err(|violations| StepError::InvalidAction { agent, violations })?;
        }

        let mut transitions = Vec::with_capacity(self.n_agents);
        for (agent, action) in self.agents.iter_mut().zip(actions) {
            let action = self.env.parse_action(action);
            let mut reward = 0.0;
            let mut terminal = false;
            for _ in 0..self.action_repeat {
                let outcome = self.env.tick(&mut agent.state, &action, &mut agent.rng);
                reward += outcome.reward;
                self.stats.ticks += 1;
                if outcome.terminal {
                    terminal = true;
                    break;
                }
            }
            agent.episode_steps += 1;
            agent.episode_return += reward;
            self.stats.policy_steps += 1;
            let truncated = !terminal && agent.episode_steps >= self.max_episode_steps;
            let done = terminal || truncated;
            if done {
                if terminal {
                    self.stats.terminated += 1;
                } else {
                    self.stats.truncated += 1;
                }
                agent.state = self.env.reset(&mut agent.rng);
                agent.episode_steps = 0;
                agent.episode_return = 0.0;
            }
            transitions.push(Transition { obs: self.env.observation(&agent.state), reward, done });
        }
        Ok(transitions)
    }
}

/// Object-safe view of an [`AgentPool`], used where the environment is chosen at runtime.
pub trait Pool: Send {
    fn definition(&self) -> &EnvDefinition;
    fn n_agents(&self) -> usize;
    fn action_repeat(&self) -> u32;
    fn reset(&mut self, seed: u64) -> Vec<PartValues>;
    fn step(&mut self, actions: &[PartValues]) -> Result<Vec<Transition>, StepError>;
    fn is_reset(&self) -> bool;
    fn stats(&self) -> PoolStats;
}

impl<E: Environment + 'static> Pool for AgentPool<E> {
    fn definition(&self) -> &EnvDefinition {
        self.env.definition()
    }

    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn action_repeat(&self) -> u32 {
        self.action_repeat
    }

    fn reset(&mut self, seed: u64) -> Vec<PartValues> {
        AgentPool::reset(self, seed)
    }

    fn step(&mut self, actions: &[PartValues]) -> Result<Vec<Transition>, StepError> {
        AgentPool::step(self, actions)
    }

    fn is_reset(&self) -> bool {
        AgentPool::is_reset(self)
    }

    fn stats(&self) -> PoolStats {
        self.stats
    }
}
