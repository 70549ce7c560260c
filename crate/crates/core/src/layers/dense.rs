//! Plain affine layer: `h = sigma(W h_prev + b)`.

use crate::activation::Activation;
use crate::error::Result;
use crate::rng::RngState;
use crate::tensor::Tensor;

use super::{as_batch, from_batch};

/// Weights are row-major `(n_out, n_in)`: row `i` is the incoming weight
/// vector of output unit `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        let (n_out, _) = weights.dims2("dense weights")?;
        if bias.rank() != 1 || bias.len() != n_out {
            return Err(crate::error::Error::ShapeMismatch(format!(
                "dense bias length {} vs n_out {n_out}",
                bias.len()
            )));
        }
        Ok(DenseLayer { weights, bias, activation })
    }

    /// He-style init: `W ~ N(0, 2/n_in)`; ReLU layers start with a small
    /// positive bias so units do not die under multiplicative noise.
    pub fn init(n_out: usize, n_in: usize, activation: Activation, rng: &mut RngState) -> Self {
        let scale = (2.0 / n_in as f64).sqrt();
        let w = (0..n_out * n_in).map(|_| scale * rng.next_gaussian()).collect();
        let b0 = if activation == Activation::Relu { 0.1 } else { 0.0 };
        DenseLayer {
            weights: Tensor::new(vec![n_out, n_in], w).expect("dense init"),
            bias: Tensor::filled(vec![n_out], b0).expect("dense bias"),
            activation,
        }
    }

    pub fn n_in(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn n_out(&self) -> usize {
        self.weights.shape()[0]
    }

    /// `sigma(W h + b)`, batched over rows of `h`.
    pub fn forward(&self, h_prev: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(h_prev)?.0)
    }

    /// Forward pass that also returns the pre-activations (needed by backprop).
    pub fn forward_cached(&self, h_prev: &Tensor) -> Result<(Tensor, Tensor)> {
        let (h, was_vec) = as_batch(h_prev)?;
        let mut z = h.matmul_nt(&self.weights)?;
        z.add_bias_rows(&self.bias)?;
        let out = self.activation.apply(&z)?;
        Ok((from_batch(out, was_vec)?, from_batch(z, was_vec)?))
    }
}
