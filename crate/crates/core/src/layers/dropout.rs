//! Dropout as a wrapper around a dense layer: multiplicative noise on the
//! layer's input vector during training, expectation-scaled weights at test.

use crate::error::Result;
use crate::noise::NoiseSpec;
use crate::rng::RngState;
use crate::tensor::Tensor;

use super::{as_batch, from_batch, DenseLayer};

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutWrapper {
    pub inner: DenseLayer,
    /// Applied to the input of `inner`; length equals the inner input extent.
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone)]
pub struct DropoutCache {
    /// Sampled mask, `(batch, n_in)`.
    pub mask: Tensor,
    /// `h . r`, the actual input seen by the inner layer.
    pub masked_input: Tensor,
    /// Pre-activations of the inner layer.
    pub preact: Tensor,
}

impl DropoutWrapper {
    pub fn new(inner: DenseLayer, noise: NoiseSpec) -> Result<Self> {
        noise.validate()?;
        Ok(DropoutWrapper { inner, noise })
    }

    /// Training forward with a caller-supplied mask of shape `(batch, n_in)`.
    pub fn forward_train_with_noise(
        &self,
        h_prev: &Tensor,
        mask: &Tensor,
    ) -> Result<(Tensor, DropoutCache)> {
        let (h, was_vec) = as_batch(h_prev)?;
        let mask2 = if mask.rank() == 1 {
            mask.reshaped(vec![1, mask.len()])?
        } else {
            mask.clone()
        };
        let masked = h.elemwise_mul(&mask2)?;
        let (out, preact) = self.inner.forward_cached(&masked)?;
        out.check_finite("dropout forward output")?;
        Ok((
            from_batch(out, was_vec)?,
            DropoutCache { mask: mask2, masked_input: masked, preact },
        ))
    }

    /// Training forward with a fresh mask per example row.
    pub fn forward_train(
        &self,
        h_prev: &Tensor,
        rng: &mut RngState,
    ) -> Result<(Tensor, DropoutCache)> {
        let batch = if h_prev.rank() == 1 { 1 } else { h_prev.shape()[0] };
        let mask = self.noise.sample_matrix(batch, self.inner.n_in(), rng)?;
        self.forward_train_with_noise(h_prev, &mask)
    }

    /// Deterministic test-time layer: weights scaled by the noise expectation
    /// (`p` for Bernoulli; `mean` for Gaussian, a no-op at mean 1).
    pub fn to_test_layer(&self) -> DenseLayer {
        let e = self.noise.expectation();
        DenseLayer {
            weights: self.inner.weights.scaled(e),
            bias: self.inner.bias.clone(),
            activation: self.inner.activation,
        }
    }
}
