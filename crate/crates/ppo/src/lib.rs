//! Minimal PPO with GAE over an envbridge vector environment.
//!
//! Policy and value are separate tanh MLPs on running-normalized observations.
//! Everything is `f64` and single-threaded; only environment stepping runs in
//! parallel (in the server processes).

pub mod dist;
pub mod eval;
pub mod file;
pub mod gae;
pub mod model;
pub mod nn;
pub mod optim;
pub mod train;

pub use dist::ActionHead;
pub use eval::{collect_episodes, evaluate, random_baseline, ReturnSummary};
pub use file::{load_policy, read_policy, save_policy, write_policy, PolicyFileError, PolicyHeader};
pub use gae::{compute_gae, normalize_advantages, GaeError};
pub use model::{clip_grad_norm, ppo_loss, ActorCritic, Batch, LossConfig, LossTerms};
pub use nn::Mlp;
pub use optim::{Adam, RunningMeanStd};
pub use train::{train, train_to_csv, PpoConfig, TrainError, TrainOutcome, TrainStats, RETURN_WINDOW};
