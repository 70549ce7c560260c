//! Cross-entropy loss over softmax outputs.

use crate::activation::softmax_rows;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Scalar cost plus the per-example costs it averages.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub total: f64,
    pub per_example: Vec<f64>,
}

/// Numerically-stabilized softmax cross-entropy on raw logits.
///
/// Returns the mean loss over the batch and the gradient with respect to the
/// logits, `(softmax - onehot) / batch`, so downstream gradients are batch
/// means and learning rates stay batch-size independent.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(LossValue, Tensor)> {
    let (batch, classes) = if logits.rank() == 1 {
        (1, logits.len())
    } else {
        logits.dims2("softmax_cross_entropy")?
    };
    if labels.len() != batch {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for batch of {batch}",
            labels.len()
        )));
    }
    for &l in labels {
        if l >= classes {
            return Err(Error::LabelOutOfRange { label: l, n_classes: classes });
        }
    }
    logits.check_finite("logits")?;

    let probs = softmax_rows(logits)?;
    let mut per_example = Vec::with_capacity(batch);
    let mut d = probs.data().to_vec();
    let inv_batch = 1.0 / batch as f64;
    for (i, &label) in labels.iter().enumerate() {
        let p = probs.data()[i * classes + label];
        per_example.push(-p.max(1e-300).ln());
        d[i * classes + label] -= 1.0;
        for v in &mut d[i * classes..(i + 1) * classes] {
            *v *= inv_batch;
        }
    }
    let total = per_example.iter().sum::<f64>() * inv_batch;
    if !total.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    Ok((
        LossValue { total, per_example },
        Tensor::new(logits.shape().to_vec(), d)?,
    ))
}

/// Mean negative log-likelihood of probability rows under the given labels,
/// clamping probabilities at 1e-30 before the log.
pub fn mean_nll(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let (batch, classes) = probs.dims2("mean_nll")?;
    if labels.len() != batch {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for batch of {batch}",
            labels.len()
        )));
    }
    let mut sum = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, n_classes: classes });
        }
        sum -= probs.data()[i * classes + label].max(1e-30).ln();
    }
    Ok(sum / batch as f64)
}

/// Fraction of rows whose argmax disagrees with the label.
pub fn error_rate(probs_or_logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (batch, classes) = probs_or_logits.dims2("error_rate")?;
    if labels.len() != batch {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for batch of {batch}",
            labels.len()
        )));
    }
    let mut wrong = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = probs_or_logits.row(i);
        let mut best = 0usize;
        for c in 1..classes {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best != label {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / batch as f64)
}
