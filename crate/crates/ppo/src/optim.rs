//! Observation normalization and the Adam optimizer.

use serde::{Deserialize, Serialize};

/// Running per-feature mean and variance (parallel Welford merge per batch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

pub const OBS_CLIP: f64 = 10.0;

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim], count: 1e-4 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fold in a row-major batch of `dim`-wide rows.
    pub fn update(&mut self, batch: &[f64]) {
        let dim = self.dim();
        let n = batch.len() / dim;
        if n == 0 {
            return;
        }
        let nf = n as f64;
        for j in 0..dim {
            let col = batch.iter().skip(j).step_by(dim);
            let mean = col.clone().sum::<f64>() / nf;
            let var = col.map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
            let delta = mean - self.mean[j];
            let total = self.count + nf;
            self.mean[j] += delta * nf / total;
            let m2 = self.var[j] * self.count + var * nf + delta * delta * self.count * nf / total;
            self.var[j] = m2 / total;
        }
        self.count += nf;
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.var)
                .map(|((x, m), v)| ((x - m) / (v + 1e-8).sqrt()).clamp(-OBS_CLIP, OBS_CLIP)),
        );
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    /// One descent step. `params` are the model's parameter blocks in gradient order.
    pub fn step(&mut self, params: &mut [&mut [f64]], grad: &[f64]) {
        assert_eq!(params.iter().map(|p| p.len()).sum::<usize>(), grad.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let flat = params.iter_mut().flat_map(|p| p.iter_mut());
        for (((p, g), m), v) in flat.zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}
