//! Global contrast normalization and ZCA whitening.

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::tensor::Tensor;

/// Per image, per channel: subtract the mean and divide by the standard
/// deviation (floored at 1e-8, so constant images map to zero).
///
/// Rank-2 input treats each row as one single-channel image; rank-4 input
/// `(n, c, h, w)` normalizes each channel plane independently.
pub fn global_contrast_normalize(images: &Tensor) -> Result<Tensor> {
    let (n_chunks, chunk) = match images.rank() {
        2 => (images.shape()[0], images.shape()[1]),
        4 => (
            images.shape()[0] * images.shape()[1],
            images.shape()[2] * images.shape()[3],
        ),
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "expected rank-2 or rank-4 images, got {:?}",
                images.shape()
            )))
        }
    };
    let mut out = images.data().to_vec();
    for i in 0..n_chunks {
        let plane = &mut out[i * chunk..(i + 1) * chunk];
        let mean = plane.iter().sum::<f64>() / chunk as f64;
        let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / chunk as f64;
        let std = var.sqrt().max(1e-8);
        for v in plane.iter_mut() {
            *v = (*v - mean) / std;
        }
    }
    Tensor::new(images.shape().to_vec(), out)
}

/// Symmetric whitening transform fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcaTransform {
    pub mean: Tensor,
    /// `(d, d)` whitening matrix `E diag(1/sqrt(l + eps)) E^T`.
    pub whitening: Tensor,
    pub epsilon: f64,
}

/// Fits the ZCA transform on `(n, d)` training rows.
pub fn zca_fit(train_images: &Tensor, epsilon: f64) -> Result<ZcaTransform> {
    let (n, d) = train_images.dims2("zca_fit")?;
    if n < 2 {
        return Err(Error::InvalidParam("zca_fit needs at least 2 rows".into()));
    }
    if epsilon < 0.0 {
        return Err(Error::InvalidParam(format!("zca epsilon must be >= 0, got {epsilon}")));
    }
    let mut mean = vec![0.0; d];
    for row in train_images.data().chunks_exact(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = train_images.data().to_vec();
    for row in centered.chunks_exact_mut(d) {
        for (v, &m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let centered = Tensor::new(vec![n, d], centered)?;
    let cov = centered.matmul_tn(&centered)?.scaled(1.0 / n as f64);
    cov.check_finite("covariance")?;

    let (eigvals, eigvecs) = symmetric_eigen(&cov, 100)?;
    // M = E diag(1/sqrt(l + eps)) E^T
    let mut scaled = eigvecs.clone();
    for i in 0..d {
        for (j, &ev) in eigvals.iter().enumerate() {
            let inv = 1.0 / (ev.max(0.0) + epsilon).sqrt();
            scaled.data_mut()[i * d + j] = eigvecs.data()[i * d + j] * inv;
        }
    }
    let whitening = scaled.matmul_nt(&eigvecs)?;
    Ok(ZcaTransform {
        mean: Tensor::new(vec![d], mean)?,
        whitening,
        epsilon,
    })
}

/// Applies a fitted transform: `(x - mean) . M`.
pub fn zca_apply(t: &ZcaTransform, images: &Tensor) -> Result<Tensor> {
    let (n, d) = images.dims2("zca_apply")?;
    if d != t.mean.len() {
        return Err(Error::ShapeMismatch(format!(
            "zca_apply: {d} features vs fitted {}",
            t.mean.len()
        )));
    }
    let mut centered = images.data().to_vec();
    for row in centered.chunks_exact_mut(d) {
        for (v, &m) in row.iter_mut().zip(t.mean.data()) {
            *v -= m;
        }
    }
    Tensor::new(vec![n, d], centered)?.matmul(&t.whitening)
}
