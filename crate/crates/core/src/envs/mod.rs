//! Reference environments and the name → environment registry.

pub mod ball_chase;
pub mod fly_by;
pub mod jumper;

use thiserror::Error;

pub use ball_chase::BallChase;
pub use fly_by::FlyBy;
pub use jumper::Jumper;

use crate::env::{AgentPool, EnvDefinition, Environment, Pool};

/// Registered environment names, in listing order.
pub const ENV_NAMES: [&str; 3] = [ball_chase::NAME, fly_by::NAME, jumper::NAME];

#[derive(Debug, Error, PartialEq)]
#[error("unknown environment `{name}` (valid: {})", ENV_NAMES.join(", "))]
pub struct UnknownEnv {
    pub name: String,
}

pub fn definition(name: &str) -> Result<EnvDefinition, UnknownEnv> {
    match name {
        ball_chase::NAME => Ok(BallChase::new().definition().clone()),
        fly_by::NAME => Ok(FlyBy::new().definition().clone()),
        jumper::NAME => Ok(Jumper::new().definition().clone()),
        _ => Err(UnknownEnv { name: name.to_owned() }),
    }
}

/// Build a pool of `n_agents` copies of the named environment.
pub fn make_pool(name: &str, n_agents: usize, action_repeat: u32) -> Result<Box<dyn Pool>, UnknownEnv> {
    Ok(match name {
        ball_chase::NAME => Box::new(AgentPool::new(BallChase::new(), n_agents, action_repeat)),
        fly_by::NAME => Box::new(AgentPool::new(FlyBy::new(), n_agents, action_repeat)),
        jumper::NAME => Box::new(AgentPool::new(Jumper::new(), n_agents, action_repeat)),
        _ => return Err(UnknownEnv { name: name.to_owned() }),
    })
}
