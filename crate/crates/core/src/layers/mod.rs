//! Layer forward semantics in train (noisy) and test (deterministic) modes.

mod conv;
mod dense;
mod dropout;
mod fame;
mod gated;

pub use conv::{ConvCache, FaMeConvLayer};
pub use dense::DenseLayer;
pub use dropout::DropoutWrapper;
pub use fame::{collapse_weights, default_factor_width, FaMeDenseLayer};
pub use gated::GatedLayer;

use crate::error::Result;
use crate::tensor::Tensor;

/// Treats a rank-1 input as a single-row batch; returns the rank-2 tensor and
/// whether the caller passed a vector.
pub(crate) fn as_batch(t: &Tensor) -> Result<(Tensor, bool)> {
    match t.rank() {
        1 => Ok((t.reshaped(vec![1, t.len()])?, true)),
        2 => Ok((t.clone(), false)),
        _ => Err(crate::error::Error::ShapeMismatch(format!(
            "expected rank-1 or rank-2 input, got {:?}",
            t.shape()
        ))),
    }
}

/// Undoes [`as_batch`] on an output tensor.
pub(crate) fn from_batch(t: Tensor, was_vector: bool) -> Result<Tensor> {
    if was_vector {
        let n = t.len();
        t.reshaped(vec![n])
    } else {
        Ok(t)
    }
}
