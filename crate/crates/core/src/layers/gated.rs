//! Factored gated layer: `h = sigma(W^T (U x . V z) + b)`.
//!
//! This is the constant-context correctness fixture: with `z` held fixed the
//! gated model collapses to an ordinary dense layer, exactly the way the
//! factored-mean layer collapses when noise is replaced by its expectation.

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

use super::{as_batch, from_batch, DenseLayer};

#[derive(Debug, Clone, PartialEq)]
pub struct GatedLayer {
    /// `(f, n_x)` input projection.
    pub factor_u: Tensor,
    /// `(f, n_z)` context projection.
    pub factor_v: Tensor,
    /// `(f, n_h)` output mixing (applied transposed).
    pub factor_w: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct GatedCache {
    /// `U x` rows, `(batch, f)`.
    pub proj_x: Tensor,
    /// `V z` rows, `(batch, f)`.
    pub proj_z: Tensor,
    /// Pre-activations.
    pub preact: Tensor,
    pub output: Tensor,
}

/// Gradients of a scalar loss with respect to the gated parameters.
#[derive(Debug, Clone)]
pub struct GatedGrads {
    pub d_u: Tensor,
    pub d_v: Tensor,
    pub d_w: Tensor,
    pub d_bias: Tensor,
}

impl GatedLayer {
    pub fn new(
        factor_u: Tensor,
        factor_v: Tensor,
        factor_w: Tensor,
        bias: Tensor,
        activation: Activation,
    ) -> Result<Self> {
        let (fu, _) = factor_u.dims2("gated U")?;
        let (fv, _) = factor_v.dims2("gated V")?;
        let (fw, n_h) = factor_w.dims2("gated W")?;
        if fu != fv || fu != fw {
            return Err(Error::ShapeMismatch(format!(
                "gated factor extents disagree: U {fu}, V {fv}, W {fw}"
            )));
        }
        if bias.rank() != 1 || bias.len() != n_h {
            return Err(Error::ShapeMismatch(format!(
                "gated bias length {} vs n_h {n_h}",
                bias.len()
            )));
        }
        Ok(GatedLayer { factor_u, factor_v, factor_w, bias, activation })
    }

    pub fn init(
        factor: usize,
        n_x: usize,
        n_z: usize,
        n_h: usize,
        activation: Activation,
        rng: &mut RngState,
    ) -> Result<Self> {
        let mk = |rows: usize, cols: usize, rng: &mut RngState| {
            let s = (1.0 / cols as f64).sqrt();
            Tensor::new(
                vec![rows, cols],
                (0..rows * cols).map(|_| s * rng.next_gaussian()).collect(),
            )
        };
        GatedLayer::new(
            mk(factor, n_x, rng)?,
            mk(factor, n_z, rng)?,
            mk(factor, n_h, rng)?,
            Tensor::zeros(vec![n_h])?,
            activation,
        )
    }

    /// `sigma(W^T (U x . V z) + b)` for paired rows of `x` and `z`.
    pub fn forward(&self, x: &Tensor, z: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(x, z)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor, z: &Tensor) -> Result<(Tensor, GatedCache)> {
        let (xb, was_vec) = as_batch(x)?;
        let (zb, _) = as_batch(z)?;
        if xb.shape()[0] != zb.shape()[0] {
            return Err(Error::ShapeMismatch(format!(
                "gated forward: {} input rows vs {} context rows",
                xb.shape()[0],
                zb.shape()[0]
            )));
        }
        let proj_x = xb.matmul_nt(&self.factor_u)?;
        let proj_z = zb.matmul_nt(&self.factor_v)?;
        let gated = proj_x.elemwise_mul(&proj_z)?;
        let mut preact = gated.matmul(&self.factor_w)?;
        preact.add_bias_rows(&self.bias)?;
        let output = self.activation.apply(&preact)?;
        Ok((
            from_batch(output.clone(), was_vec)?,
            GatedCache { proj_x, proj_z, preact, output },
        ))
    }

    /// For a fixed context the gated model is an ordinary dense layer with
    /// `W_hat = W^T diag(V z) U`.
    pub fn fixed_context_collapse(&self, z: &Tensor) -> Result<DenseLayer> {
        if z.rank() != 1 || z.len() != self.factor_v.shape()[1] {
            return Err(Error::ShapeMismatch(format!(
                "context length {} vs n_z {}",
                z.len(),
                self.factor_v.shape()[1]
            )));
        }
        let vz = self.factor_v.matmul(&z.reshaped(vec![z.len(), 1])?)?;
        // Scale row i of U by (V z)_i, then W_hat = W^T . scaled U.
        let (f, n_x) = self.factor_u.dims2("gated U")?;
        let mut scaled = self.factor_u.clone();
        for i in 0..f {
            let g = vz.data()[i];
            for v in &mut scaled.data_mut()[i * n_x..(i + 1) * n_x] {
                *v *= g;
            }
        }
        let w_hat = self.factor_w.matmul_tn(&scaled)?;
        DenseLayer::new(w_hat, self.bias.clone(), self.activation)
    }

    /// Gradients with respect to all four parameter tensors, given the
    /// upstream gradient `d_out` and the cache from `forward_cached`.
    pub fn backward(
        &self,
        x: &Tensor,
        z: &Tensor,
        cache: &GatedCache,
        d_out: &Tensor,
    ) -> Result<GatedGrads> {
        let (xb, _) = as_batch(x)?;
        let (zb, _) = as_batch(z)?;
        let (d_out2, _) = as_batch(d_out)?;
        let d_pre = self.activation.backward(&cache.preact, &cache.output, &d_out2)?;
        let gated = cache.proj_x.elemwise_mul(&cache.proj_z)?;
        let d_w = gated.matmul_tn(&d_pre)?;
        let d_bias = d_pre.column_sums()?;
        let d_gated = d_pre.matmul_nt(&self.factor_w)?;
        let d_proj_x = d_gated.elemwise_mul(&cache.proj_z)?;
        let d_proj_z = d_gated.elemwise_mul(&cache.proj_x)?;
        let d_u = d_proj_x.matmul_tn(&xb)?;
        let d_v = d_proj_z.matmul_tn(&zb)?;
        Ok(GatedGrads { d_u, d_v, d_w, d_bias })
    }
}
