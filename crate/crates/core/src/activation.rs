//! Elementwise and row-wise activation functions.

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    /// Row-wise softmax (max-subtracted for stability).
    Softmax,
}

/// max(0, x) elementwise.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Row-wise softmax of a rank-2 tensor; rank-1 input is treated as one row.
pub fn softmax_rows(z: &Tensor) -> Result<Tensor> {
    let (rows, cols) = if z.rank() == 1 {
        (1, z.len())
    } else {
        z.dims2("softmax")?
    };
    let mut out = z.data().to_vec();
    for r in 0..rows {
        let row = &mut out[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(z.shape().to_vec(), out)
}

impl Activation {
    /// Applies the activation to pre-activations `z`.
    pub fn apply(&self, z: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Identity => Ok(z.clone()),
            Activation::Relu => Ok(relu(z)),
            Activation::Softmax => softmax_rows(z),
        }
    }

    /// Chain rule through the activation: maps upstream `d_out` to `d_z`.
    ///
    /// `z` are the cached pre-activations, `out` the cached outputs. The ReLU
    /// subgradient at exactly zero is taken as 0.
    pub fn backward(&self, z: &Tensor, out: &Tensor, d_out: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Identity => Ok(d_out.clone()),
            Activation::Relu => {
                let mut d = d_out.clone();
                for (g, &pre) in d.data_mut().iter_mut().zip(z.data()) {
                    if pre <= 0.0 {
                        *g = 0.0;
                    }
                }
                Ok(d)
            }
            Activation::Softmax => {
                // d_z = y * (d_out - <d_out, y>) per row.
                let (rows, cols) = if out.rank() == 1 {
                    (1, out.len())
                } else {
                    out.dims2("softmax backward")?
                };
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    let y = &out.data()[r * cols..(r + 1) * cols];
                    let g = &d_out.data()[r * cols..(r + 1) * cols];
                    let dot: f64 = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                    for c in 0..cols {
                        d[r * cols + c] = y[c] * (g[c] - dot);
                    }
                }
                Tensor::new(out.shape().to_vec(), d)
            }
        }
    }
}
