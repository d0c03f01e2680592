//! Fully connected tanh networks over a flat `f64` parameter vector.

use rand::Rng;

/// Layer `l` stores its weights row-major (`out × in`) followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// `layers[0]` is the input, `layers[l]` the (post-tanh) output of layer `l`.
    layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("forward pass ran")
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Uniform weights in `±gain·√(3/in)`, `gain` = 1 except `output_gain` on the last layer; zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        let mut params = Vec::with_capacity(param_count(sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l == last { output_gain } else { 1.0 };
            let bound = gain * (3.0 / fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Self {
        assert_eq!(params.len(), param_count(sizes), "parameter count does not match layer sizes");
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64], trace: &mut Trace) {
        assert_eq!(x.len(), self.input_dim());
        let n_layers = self.sizes.len() - 1;
        trace.layers.resize_with(n_layers + 1, Vec::new);
        trace.layers[0].clear();
        trace.layers[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let (done, rest) = trace.layers.split_at_mut(l + 1);
            let input = &done[l];
            let out = &mut rest[0];
            out.clear();
            for (row, b) in weights.chunks_exact(fan_in).zip(bias) {
                let z = b + row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>();
                out.push(if l + 1 < n_layers { z.tanh() } else { z });
            }
        }
    }

    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        let mut trace = Trace::default();
        self.forward(x, &mut trace);
        trace.layers.pop().unwrap()
    }

    /// Accumulate `∂L/∂params` into `grad` given `∂L/∂output` for the traced input.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut delta = grad_output.to_vec();
        let mut end = self.params.len();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let start = end - (fan_in * fan_out + fan_out);
            let input = &trace.layers[l];
            {
                let (gw, gb) = grad[start..end].split_at_mut(fan_in * fan_out);
                for (j, d) in delta.iter().enumerate() {
                    gb[j] += d;
                    for (g, v) in gw[j * fan_in..(j + 1) * fan_in].iter_mut().zip(input) {
                        *g += d * v;
                    }
                }
            }
            if l > 0 {
                let weights = &self.params[start..start + fan_in * fan_out];
                let mut next = vec![0.0; fan_in];
                for (j, d) in delta.iter().enumerate() {
                    for (n, w) in next.iter_mut().zip(&weights[j * fan_in..(j + 1) * fan_in]) {
                        *n += d * w;
                    }
                }
                // Input to layer l is tanh output of layer l-1.
                for (n, a) in next.iter_mut().zip(input) {
                    *n *= 1.0 - a * a;
                }
                delta = next;
            }
            end = start;
        }
    }
}
