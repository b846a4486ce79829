use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Fully connected network with SiLU hidden layers and a linear output.
///
/// Parameters are one flat vector; layer `l` stores its `out x in` weight
/// matrix row by row followed by its `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Pre- and post-activation values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `post[0]` is the input, `post[L]` the output.
    post: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

pub const HIDDEN_LAYERS: usize = 4;
pub const HIDDEN_WIDTH: usize = 32;

impl FeedforwardNet {
    /// All-zero network with the given layer widths.
    pub fn zeros(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Input(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            sizes,
            params: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: Vec<usize>, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut off = 0;
        for w in net.sizes.clone().windows(2) {
            let (i, o) = (w[0], w[1]);
            let limit = (6.0 / (i + o) as f64).sqrt();
            for p in &mut net.params[off..off + i * o] {
                *p = rng.random_range(-limit..limit);
            }
            off += i * o + o;
        }
        Ok(net)
    }

    /// Four hidden layers of 32 units.
    pub fn standard_sizes(input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(std::iter::repeat_n(HIDDEN_WIDTH, HIDDEN_LAYERS));
        s.push(output);
        s
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters given, layer sizes need {}",
                params.len(),
                net.params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap_or(&0)
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

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Input(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite network input {x:?}")));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let n_layers = self.sizes.len() - 1;
        let mut h = x.to_vec();
        let mut z = Vec::with_capacity(self.sizes.iter().copied().max().unwrap_or(0));
        let mut off = 0;
        for l in 0..n_layers {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + i * o];
            let b = &self.params[off + i * o..off + i * o + o];
            z.clear();
            z.extend((0..o).map(|r| {
                let v = b[r]
                    + w[r * i..(r + 1) * i]
                        .iter()
                        .zip(&h)
                        .map(|(a, c)| a * c)
                        .sum::<f64>();
                if l + 1 == n_layers {
                    v
                } else {
                    silu(v)
                }
            }));
            std::mem::swap(&mut h, &mut z);
            off += i * o + o;
        }
        Ok(h)
    }

    /// Forward pass over `inputs`, one sample per item; returns one output
    /// vector per sample.
    pub fn forward_batch(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        for x in inputs {
            self.check_input(x)?;
        }
        let n_layers = self.sizes.len() - 1;
        let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
        let mut h = DMatrix::from_column_slice(self.input_dim(), inputs.len(), &flat);
        let mut off = 0;
        for l in 0..n_layers {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let w = DMatrix::from_row_slice(o, i, &self.params[off..off + i * o]);
            let b = &self.params[off + i * o..off + i * o + o];
            let mut z = w * &h;
            for mut col in z.column_iter_mut() {
                for (v, bias) in col.iter_mut().zip(b) {
                    *v += bias;
                    if l + 1 < n_layers {
                        *v = silu(*v);
                    }
                }
            }
            h = z;
            off += i * o + o;
        }
        Ok(h.column_iter()
            .map(|c| c.iter().copied().collect())
            .collect())
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let n_layers = self.sizes.len() - 1;
        let mut post = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers);
        post.push(x.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + i * o];
            let b = &self.params[off + i * o..off + i * o + o];
            let h = &post[l];
            let z: Vec<f64> = (0..o)
                .map(|r| {
                    let row = &w[r * i..(r + 1) * i];
                    b[r] + row.iter().zip(h).map(|(a, c)| a * c).sum::<f64>()
                })
                .collect();
            let a = if l + 1 == n_layers {
                z.clone()
            } else {
                z.iter().map(|&v| silu(v)).collect()
            };
            pre.push(z);
            post.push(a);
            off += i * o + o;
        }
        Ok(ForwardCache { post, pre })
    }

    /// Adds `upstream . d(output)/d(params)` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let h = &cache.post[l];
            for r in 0..o {
                let d = delta[r];
                if d != 0.0 {
                    let g = &mut grad[off + r * i..off + (r + 1) * i];
                    for (gk, hk) in g.iter_mut().zip(h) {
                        *gk += d * hk;
                    }
                }
                grad[off + i * o + r] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + i * o];
                let z = &cache.pre[l - 1];
                let mut next = vec![0.0; i];
                for r in 0..o {
                    let d = delta[r];
                    if d != 0.0 {
                        for (k, nk) in next.iter_mut().enumerate() {
                            *nk += w[r * i + k] * d;
                        }
                    }
                }
                for (k, nk) in next.iter_mut().enumerate() {
                    *nk *= silu_grad(z[k]);
                }
                delta = next;
            }
        }
    }
}
