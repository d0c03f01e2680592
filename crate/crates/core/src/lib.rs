//! Lockstep environment bridge: wire protocol, raycast sensors, reference
//! environments, the environment server and the multi-process vector client.

pub mod client;
pub mod env;
pub mod envs;
pub mod geometry;
pub mod protocol;
pub mod sensors;
pub mod server;
pub mod transcript;
