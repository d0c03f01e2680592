//! Policy file: `PPO1`, a little-endian u32 header length, a JSON header,
//! then every tensor as little-endian f32 in header order.

use std::io::{self, Read, Write};
use std::path::Path;

use envbridge_core::protocol::SpaceSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::ActionHead;
use crate::model::ActorCritic;
use crate::nn::Mlp;
use crate::optim::RunningMeanStd;

pub const MAGIC: &[u8; 4] = b"PPO1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyHeader {
    pub env_name: String,
    pub obs_space: SpaceSpec,
    pub action_space: SpaceSpec,
    pub hidden: Vec<usize>,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Error)]
pub enum PolicyFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a policy file (bad magic)")]
    Magic,
    #[error("bad header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("header does not describe this architecture: {0}")]
    Layout(String),
}

fn mlp_tensors(prefix: &str, net: &Mlp, out: &mut Vec<TensorInfo>) {
    for (l, w) in net.sizes().windows(2).enumerate() {
        out.push(TensorInfo { name: format!("{prefix}.{l}.weight"), shape: vec![w[1], w[0]] });
        out.push(TensorInfo { name: format!("{prefix}.{l}.bias"), shape: vec![w[1]] });
    }
}

fn layout(model: &ActorCritic) -> Vec<TensorInfo> {
    let mut t = Vec::new();
    mlp_tensors("policy", &model.policy, &mut t);
    t.push(TensorInfo { name: "log_std".into(), shape: vec![model.log_std.len()] });
    mlp_tensors("value", &model.value, &mut t);
    t.push(TensorInfo { name: "obs_mean".into(), shape: vec![model.obs_dim()] });
    t.push(TensorInfo { name: "obs_var".into(), shape: vec![model.obs_dim()] });
    t
}

fn hidden_of(model: &ActorCritic) -> Vec<usize> {
    let sizes = model.policy.sizes();
    sizes[1..sizes.len() - 1].to_vec()
}

pub fn write_policy<W: Write>(mut w: W, env_name: &str, model: &ActorCritic) -> Result<(), PolicyFileError> {
    let header = PolicyHeader {
        env_name: env_name.to_owned(),
        obs_space: model.obs_space.clone(),
        action_space: model.action_space.clone(),
        hidden: hidden_of(model),
        tensors: layout(model),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let values = model
        .params()
        .into_iter()
        .chain(model.obs_norm.mean.iter().copied())
        .chain(model.obs_norm.var.iter().copied());
    for v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_policy(path: &Path, env_name: &str, model: &ActorCritic) -> Result<(), PolicyFileError> {
    write_policy(io::BufWriter::new(std::fs::File::create(path)?), env_name, model)
}

pub fn read_policy<R: Read>(mut r: R) -> Result<(PolicyHeader, ActorCritic), PolicyFileError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PolicyFileError::Magic);
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: PolicyHeader = serde_json::from_slice(&json)?;

    // Rebuild the architecture the header claims, then insist the tensor list matches it.
    let obs_dim = header.obs_space.flat_width();
    let head = ActionHead::new(&header.action_space);
    let sizes = |out: usize| -> Vec<usize> {
        std::iter::once(obs_dim).chain(header.hidden.iter().copied()).chain(std::iter::once(out)).collect()
    };
    let (p_sizes, v_sizes) = (sizes(head.net_outputs()), sizes(1));
    if header.hidden.iter().any(|&h| h == 0) {
        return Err(PolicyFileError::Layout("zero-width hidden layer".into()));
    }
    let mut model = ActorCritic {
        obs_space: header.obs_space.clone(),
        action_space: header.action_space.clone(),
        policy: Mlp::from_params(&p_sizes, vec![0.0; crate::nn::param_count(&p_sizes)]),
        log_std: vec![0.0; head.log_std_len()],
        value: Mlp::from_params(&v_sizes, vec![0.0; crate::nn::param_count(&v_sizes)]),
        obs_norm: RunningMeanStd::new(obs_dim),
        head,
    };
    if layout(&model) != header.tensors {
        return Err(PolicyFileError::Layout("tensor list differs from the declared spaces and hidden sizes".into()));
    }
    let total: usize = header.tensors.iter().map(TensorInfo::len).sum();
    let mut bytes = vec![0u8; total * 4];
    r.read_exact(&mut bytes)?;
    let values: Vec<f64> = bytes.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap()))).collect();
    let n = model.n_params();
    model.set_params(&values[..n]);
    model.obs_norm.mean = values[n..n + obs_dim].to_vec();
    model.obs_norm.var = values[n + obs_dim..].to_vec();
    let mut rest = Vec::new();
    if r.read_to_end(&mut rest)? != 0 {
        return Err(PolicyFileError::Layout(format!("{} trailing bytes", rest.len())));
    }
    Ok((header, model))
}

pub fn load_policy(path: &Path) -> Result<(PolicyHeader, ActorCritic), PolicyFileError> {
    read_policy(io::BufReader::new(std::fs::File::open(path)?))
}
