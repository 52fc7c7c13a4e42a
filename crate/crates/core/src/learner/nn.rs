//! Small fully connected network with tanh hidden layers and manual backprop.
//!
//! Parameters live in one flat vector so optimisers, checkpoints and
//! finite-difference checks can treat them uniformly. Each layer stores its
//! weight matrix column-major (`out x in`) followed by its bias.

use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations of every layer for one batch (columns are samples).
#[derive(Debug, Clone)]
pub struct Forward {
    pub activations: Vec<DMatrix<f64>>,
}

impl Forward {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().expect("at least the input")
    }
}

fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(big, small, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    // Sign fix so the result is uniformly distributed over orthogonal matrices.
    let r = qr.r();
    for j in 0..small {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    q * gain
}

impl Mlp {
    /// Orthogonal weights (gain √2 on hidden layers, `output_gain` on the
    /// last), zero biases.
    pub fn new(sizes: &[usize], output_gain: f64, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let mut params = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 2 == sizes.len() { output_gain } else { std::f64::consts::SQRT_2 };
            let w = orthogonal(fan_out, fan_in, gain, rng);
            params.extend_from_slice(w.as_slice());
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    /// Rebuilds a network from stored sizes and flat parameters.
    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("network needs at least two non-empty layers"));
        }
        let expected: usize = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        if params.len() != expected {
            return Err(Error::invalid(format!("{} parameters, layout needs {expected}", params.len())));
        }
        Ok(Self { sizes, params })
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

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn offsets(&self, layer: usize) -> (usize, usize) {
        let mut off = 0;
        for l in 0..layer {
            off += self.sizes[l + 1] * (self.sizes[l] + 1);
        }
        (off, off + self.sizes[layer + 1] * self.sizes[layer])
    }

    fn weight(&self, layer: usize) -> DMatrixView<'_, f64> {
        let (w, b) = self.offsets(layer);
        DMatrixView::from_slice(&self.params[w..b], self.sizes[layer + 1], self.sizes[layer])
    }

    fn bias(&self, layer: usize) -> &[f64] {
        let (_, b) = self.offsets(layer);
        &self.params[b..b + self.sizes[layer + 1]]
    }

    /// Batched forward pass; `x` is `input_size x batch`.
    pub fn forward(&self, x: &DMatrix<f64>) -> Forward {
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(x.clone());
        for l in 0..layers {
            let mut z = self.weight(l) * activations.last().unwrap();
            let bias = self.bias(l);
            for mut col in z.column_iter_mut() {
                for (v, b) in col.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            if l + 1 < layers {
                z.apply(|v| *v = v.tanh());
            }
            activations.push(z);
        }
        Forward { activations }
    }

    /// Gradient of a scalar w.r.t. the parameters, given its gradient w.r.t.
    /// the output activations (`output_size x batch`).
    pub fn backward(&self, fwd: &Forward, grad_out: &DMatrix<f64>) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = grad_out.clone();
        for l in (0..layers).rev() {
            if l + 1 < layers {
                let h = &fwd.activations[l + 1];
                delta.zip_apply(h, |d, h| *d *= 1.0 - h * h);
            }
            let input = &fwd.activations[l];
            let dw = &delta * input.transpose();
            let (w, b) = self.offsets(l);
            grads[w..b].copy_from_slice(dw.as_slice());
            for (i, g) in grads[b..b + self.sizes[l + 1]].iter_mut().enumerate() {
                *g = delta.row(i).sum();
            }
            if l > 0 {
                delta = self.weight(l).transpose() * &delta;
            }
        }
        grads
    }
}
