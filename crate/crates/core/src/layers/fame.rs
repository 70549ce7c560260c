//! Factored-mean layer: `h = sigma(V (U h_prev . r) + b)`.
//!
//! The weight matrix is stored as the pair `(U, V)`. During training a fresh
//! multiplicative noise vector `r` is drawn per example and applied to the
//! factor activations `U h_prev`; the deterministic test network uses the
//! collapsed product `W = V U`.

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::rng::RngState;
use crate::tensor::Tensor;

use super::{as_batch, from_batch, DenseLayer};

#[derive(Debug, Clone, PartialEq)]
pub struct FaMeDenseLayer {
    /// First factor, `(f, n_in)`.
    pub factor_u: Tensor,
    /// Second factor, `(n_out, f)`.
    pub factor_v: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    pub noise: NoiseSpec,
}

/// Intermediate values retained for the backward pass.
#[derive(Debug, Clone)]
pub struct FameCache {
    /// Sampled noise, `(batch, f)`.
    pub noise: Tensor,
    /// `U h . r`, `(batch, f)`.
    pub factored_noisy: Tensor,
    /// Pre-activations `V (U h . r) + b`.
    pub preact: Tensor,
}

/// Rank rule: a factor width that does not restrict the rank of `V U`.
pub fn default_factor_width(n_out: usize, n_in: usize) -> usize {
    n_out.min(n_in)
}

/// Collapses a factor pair to the single test-time matrix `W = V U`.
pub fn collapse_weights(factor_u: &Tensor, factor_v: &Tensor) -> Result<Tensor> {
    factor_v.matmul(factor_u)
}

impl FaMeDenseLayer {
    pub fn new(
        factor_u: Tensor,
        factor_v: Tensor,
        bias: Tensor,
        activation: Activation,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let (fu, _n_in) = factor_u.dims2("fame U")?;
        let (n_out, fv) = factor_v.dims2("fame V")?;
        if fu != fv {
            return Err(Error::ShapeMismatch(format!(
                "fame factor extents disagree: U has {fu}, V has {fv}"
            )));
        }
        if bias.rank() != 1 || bias.len() != n_out {
            return Err(Error::ShapeMismatch(format!(
                "fame bias length {} vs n_out {n_out}",
                bias.len()
            )));
        }
        noise.validate()?;
        Ok(FaMeDenseLayer { factor_u, factor_v, bias, activation, noise })
    }

    /// Initializes factors so the collapsed product matches He scaling:
    /// `U ~ N(0, 1/n_in)`, `V ~ N(0, 2/f)` gives `Var[(VU)_ij] = 2/n_in`.
    pub fn init(
        n_out: usize,
        n_in: usize,
        factor: usize,
        activation: Activation,
        noise: NoiseSpec,
        rng: &mut RngState,
    ) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidParam("factor width must be >= 1".into()));
        }
        let su = (1.0 / n_in as f64).sqrt();
        let sv = (2.0 / factor as f64).sqrt();
        let u = (0..factor * n_in).map(|_| su * rng.next_gaussian()).collect();
        let v = (0..n_out * factor).map(|_| sv * rng.next_gaussian()).collect();
        let b0 = if activation == Activation::Relu { 0.1 } else { 0.0 };
        FaMeDenseLayer::new(
            Tensor::new(vec![factor, n_in], u)?,
            Tensor::new(vec![n_out, factor], v)?,
            Tensor::filled(vec![n_out], b0)?,
            activation,
            noise,
        )
    }

    pub fn n_in(&self) -> usize {
        self.factor_u.shape()[1]
    }

    pub fn n_out(&self) -> usize {
        self.factor_v.shape()[0]
    }

    pub fn factor_width(&self) -> usize {
        self.factor_u.shape()[0]
    }

    /// Training forward with caller-supplied noise of shape `(batch, f)`.
    pub fn forward_train_with_noise(
        &self,
        h_prev: &Tensor,
        noise: &Tensor,
    ) -> Result<(Tensor, FameCache)> {
        let (h, was_vec) = as_batch(h_prev)?;
        let factored = h.matmul_nt(&self.factor_u)?;
        let noise2 = if noise.rank() == 1 {
            noise.reshaped(vec![1, noise.len()])?
        } else {
            noise.clone()
        };
        let factored_noisy = factored.elemwise_mul(&noise2)?;
        let mut preact = factored_noisy.matmul_nt(&self.factor_v)?;
        preact.add_bias_rows(&self.bias)?;
        let out = self.activation.apply(&preact)?;
        out.check_finite("fame forward output")?;
        Ok((
            from_batch(out, was_vec)?,
            FameCache { noise: noise2, factored_noisy, preact },
        ))
    }

    /// Training forward: draws one fresh noise vector per example row.
    pub fn forward_train(
        &self,
        h_prev: &Tensor,
        rng: &mut RngState,
    ) -> Result<(Tensor, FameCache)> {
        let batch = if h_prev.rank() == 1 { 1 } else { h_prev.shape()[0] };
        let noise = self.noise.sample_matrix(batch, self.factor_width(), rng)?;
        self.forward_train_with_noise(h_prev, &noise)
    }

    /// Deterministic test forward through the collapsed matrix `W = V U`.
    pub fn forward_test(&self, h_prev: &Tensor) -> Result<Tensor> {
        self.to_test_layer()?.forward(h_prev)
    }

    /// The equivalent plain dense layer of the mean network.
    pub fn to_test_layer(&self) -> Result<DenseLayer> {
        DenseLayer::new(
            collapse_weights(&self.factor_u, &self.factor_v)?,
            self.bias.clone(),
            self.activation,
        )
    }
}
