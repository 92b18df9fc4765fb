//! Small fully connected networks with exact backpropagation and Adam.
//!
//! Parameters live in one flat vector, layer by layer, each layer storing its
//! row-major weight matrix (`out × in`) followed by its bias. Gradients use
//! the same layout.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "negotiator-mlp";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: Activation,
    params: Vec<f64>,
}

/// Pre- and post-activation values of every layer for one input.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `values[0]` is the input; `values[l + 1]` the output of layer `l`.
    values: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().unwrap()
    }
}

impl Mlp {
    /// Hidden layers use ReLU. Weights and biases are drawn from
    /// `U(−1/√fan_in, 1/√fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        let mut offset = 0;
        for l in 0..net.n_layers() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_out * (fan_in + 1)] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += fan_out * (fan_in + 1);
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let n: usize = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            output,
            params: vec![0.0; n],
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.n_layers() {
            self.output
        } else {
            Activation::Relu
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.values.pop().unwrap())
    }

    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_size() {
            return Err(Error::Shape {
                expected: self.input_size(),
                got: x.len(),
            });
        }
        let mut values = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_out * n_in];
            let b = &self.params[offset + n_out * n_in..offset + n_out * (n_in + 1)];
            let input = values.last().unwrap();
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    b[o] + w[o * n_in..(o + 1) * n_in]
                        .iter()
                        .zip(input)
                        .map(|(wi, xi)| wi * xi)
                        .sum::<f64>()
                })
                .collect();
            let act = self.activation(l);
            values.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
            offset += n_out * (n_in + 1);
        }
        Ok(Trace { values, pre })
    }

    /// Gradients of a loss with respect to the parameters (accumulated into
    /// `grads`) and with respect to the input (returned), given `dL/dy`.
    pub fn backward_into(
        &self,
        trace: &Trace,
        dl_dy: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        if dl_dy.len() != self.output_size() {
            return Err(Error::Shape {
                expected: self.output_size(),
                got: dl_dy.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let mut offsets = Vec::with_capacity(self.n_layers());
        let mut offset = 0;
        for l in 0..self.n_layers() {
            offsets.push(offset);
            offset += self.sizes[l + 1] * (self.sizes[l] + 1);
        }
        let mut delta: Vec<f64> = dl_dy.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activation(l);
            for o in 0..n_out {
                delta[o] *= act.derivative(trace.pre[l][o], trace.values[l + 1][o]);
            }
            let base = offsets[l];
            let input = &trace.values[l];
            for o in 0..n_out {
                if delta[o] == 0.0 {
                    continue;
                }
                let row = &mut grads[base + o * n_in..base + (o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += delta[o] * xi;
                }
                grads[base + n_out * n_in + o] += delta[o];
            }
            let w = &self.params[base..base + n_out * n_in];
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                if delta[o] == 0.0 {
                    continue;
                }
                for (nx, wi) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *nx += delta[o] * wi;
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    /// Parameter and input gradients for a single input.
    pub fn backward(&self, x: &[f64], dl_dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.trace(x)?;
        let mut grads = vec![0.0; self.params.len()];
        let input_grad = self.backward_into(&trace, dl_dy, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// `θ ← τ·source + (1 − τ)·θ`.
    pub fn soft_update(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if source.sizes != self.sizes {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: source.params.len(),
            });
        }
        for (p, s) in self.params.iter_mut().zip(&source.params) {
            *p = tau * s + (1.0 - tau) * *p;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn to_json(&self) -> String {
        let file = NetFile {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            net: self.clone(),
        };
        serde_json::to_string(&file).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetFile = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(Error::Checkpoint(format!(
                "not a network file (format '{}')",
                file.format
            )));
        }
        if file.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported network file version {} (expected {FORMAT_VERSION})",
                file.version
            )));
        }
        let net = file.net;
        let expected = Mlp::zeros(&net.sizes, net.output)?.params.len();
        if net.params.len() != expected {
            return Err(Error::Checkpoint(format!(
                "network file has {} parameters, layer sizes imply {expected}",
                net.params.len()
            )));
        }
        if !net.is_finite() {
            return Err(Error::Checkpoint(
                "network file contains non-finite parameters".into(),
            ));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

#[derive(Serialize, Deserialize)]
struct NetFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    net: Mlp,
}

/// Adam optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    /// Updates skipped because of non-finite gradients.
    pub skipped: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            skipped: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update; returns `false` (and changes nothing) when any
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<bool> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape {
                expected: self.m.len(),
                got: grads.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            self.skipped += 1;
            log::warn!("skipping update with non-finite gradient");
            return Ok(false);
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(true)
    }
}
