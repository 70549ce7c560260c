//! Model-averaging analysis: sampled noisy subnetwork predictions, their
//! geometric and arithmetic means, and the deterministic test procedure they
//! approximate; plus relative weight-norm tracking and activation sparsity.

use crate::activation::{softmax_rows, Activation};
use crate::error::{Error, Result};
use crate::loss::{error_rate, mean_nll};
use crate::network::{stream_ids, Network, NoiseStreams};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Per-class probability rows for every test example from one sampled
/// subnetwork (one fresh noise draw per layer).
#[derive(Debug, Clone)]
pub struct PredictionSample {
    pub probs: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanKind {
    Geometric,
    Arithmetic,
    Deterministic,
}

/// A combined predictor with its quality on the supplied labels.
#[derive(Debug, Clone)]
pub struct MeanEstimate {
    pub kind: MeanKind,
    pub probs: Tensor,
    pub nll: f64,
    pub error_rate: f64,
}

/// Turns network outputs into probability rows; a no-op when the final layer
/// already applies softmax.
fn probabilities(net_output_activation: Activation, out: &Tensor) -> Result<Tensor> {
    match net_output_activation {
        Activation::Softmax => Ok(out.clone()),
        _ => softmax_rows(out),
    }
}

fn output_activation(net: &Network) -> Activation {
    match net.layers.last().expect("nonempty network") {
        crate::network::StackLayer::Dense(l) => l.activation,
        crate::network::StackLayer::Fame(l) => l.activation,
        crate::network::StackLayer::Dropout(l) => l.inner.activation,
    }
}

/// Draws `n_samples` stochastic forward passes over `inputs`, one noise
/// stream per sample derived from `seed`, so sample `i` is identical no
/// matter how many samples follow it.
pub fn sample_subnetwork_predictions(
    net: &Network,
    inputs: &Tensor,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<PredictionSample>> {
    if n_samples == 0 {
        return Err(Error::InvalidParam("n_samples must be >= 1".into()));
    }
    let act = output_activation(net);
    let root = RngState::new(seed).stream(stream_ids::SAMPLING);
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let sample_seed = root.stream(i as u64).state().0;
        let mut streams = NoiseStreams::new(sample_seed, net.layers.len());
        let (out, _) = net.forward_train(inputs, &mut streams)?;
        samples.push(PredictionSample { probs: probabilities(act, &out)? });
    }
    Ok(samples)
}

fn renormalize_rows(probs: &mut Tensor) -> Result<()> {
    let (rows, cols) = probs.dims2("renormalize")?;
    for r in 0..rows {
        let row = &mut probs.data_mut()[r * cols..(r + 1) * cols];
        let sum: f64 = row.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::NonFinite("probability row sum".into()));
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(())
}

fn estimate(kind: MeanKind, mut probs: Tensor, labels: &[usize]) -> Result<MeanEstimate> {
    renormalize_rows(&mut probs)?;
    let nll = mean_nll(&probs, labels)?;
    let err = error_rate(&probs, labels)?;
    Ok(MeanEstimate { kind, probs, nll, error_rate: err })
}

/// Per-class geometric mean of the samples, computed in log space with a
/// 1e-30 clamp, renormalized per example.
pub fn geometric_mean_predict(
    samples: &[PredictionSample],
    labels: &[usize],
) -> Result<MeanEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidParam("need at least one sample".into()));
    }
    let shape = samples[0].probs.shape().to_vec();
    let mut log_sum = vec![0.0; samples[0].probs.len()];
    for s in samples {
        if s.probs.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch("sample shapes disagree".into()));
        }
        for (acc, &p) in log_sum.iter_mut().zip(s.probs.data()) {
            *acc += p.max(1e-30).ln();
        }
    }
    let inv = 1.0 / samples.len() as f64;
    let geo: Vec<f64> = log_sum.iter().map(|&l| (l * inv).exp()).collect();
    estimate(MeanKind::Geometric, Tensor::new(shape, geo)?, labels)
}

/// Elementwise average of the samples.
pub fn arithmetic_mean_predict(
    samples: &[PredictionSample],
    labels: &[usize],
) -> Result<MeanEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidParam("need at least one sample".into()));
    }
    let shape = samples[0].probs.shape().to_vec();
    let mut sum = vec![0.0; samples[0].probs.len()];
    for s in samples {
        if s.probs.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch("sample shapes disagree".into()));
        }
        for (acc, &p) in sum.iter_mut().zip(s.probs.data()) {
            *acc += p;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    for v in &mut sum {
        *v *= inv;
    }
    estimate(MeanKind::Arithmetic, Tensor::new(shape, sum)?, labels)
}

/// The deterministic test procedure of the model kind: collapsed factors for
/// factored layers, expectation-scaled weights for dropout.
pub fn deterministic_test_predict(
    net: &Network,
    inputs: &Tensor,
    labels: &[usize],
) -> Result<MeanEstimate> {
    let out = net.to_test_network()?.forward(inputs)?;
    let probs = probabilities(output_activation(net), &out)?;
    estimate(MeanKind::Deterministic, probs, labels)
}

/// Frobenius norm of each layer's effective weight matrix divided by its
/// value in `init_net` (the model exactly as initialized).
pub fn relative_l2_norms(net: &Network, init_net: &Network) -> Result<Vec<f64>> {
    let now = net.effective_weight_norms()?;
    let init = init_net.effective_weight_norms()?;
    if now.len() != init.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} layers vs {} at init",
            now.len(),
            init.len()
        )));
    }
    Ok(now
        .iter()
        .zip(&init)
        .map(|(&n, &i)| n / i.max(1e-300))
        .collect())
}

/// Same ratios against pre-recorded initialization norms.
pub fn relative_l2_norms_from(net: &Network, init_norms: &[f64]) -> Result<Vec<f64>> {
    let now = net.effective_weight_norms()?;
    if now.len() != init_norms.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} layers vs {} recorded norms",
            now.len(),
            init_norms.len()
        )));
    }
    Ok(now
        .iter()
        .zip(init_norms)
        .map(|(&n, &i)| n / i.max(1e-300))
        .collect())
}

/// Fraction of exactly-zero entries.
pub fn sparsity_fraction(activations: &Tensor) -> f64 {
    let zeros = activations.data().iter().filter(|&&v| v == 0.0).count();
    zeros as f64 / activations.len() as f64
}

/// One row of the sampled-averaging analysis.
#[derive(Debug, Clone)]
pub struct AveragingRow {
    pub n_samples: usize,
    pub geo_nll: f64,
    pub arith_nll: f64,
    pub det_nll: f64,
    pub geo_err: f64,
    pub arith_err: f64,
    pub det_err: f64,
}

/// Evaluates geometric/arithmetic mean predictors on prefixes of one sample
/// set at each requested count, against the constant deterministic predictor.
pub fn averaging_analysis(
    net: &Network,
    inputs: &Tensor,
    labels: &[usize],
    counts: &[usize],
    seed: u64,
) -> Result<Vec<AveragingRow>> {
    let max_n = *counts.iter().max().ok_or_else(|| {
        Error::InvalidParam("need at least one sample count".into())
    })?;
    let samples = sample_subnetwork_predictions(net, inputs, max_n, seed)?;
    let det = deterministic_test_predict(net, inputs, labels)?;
    let mut rows = Vec::with_capacity(counts.len());
    for &n in counts {
        if n == 0 {
            return Err(Error::InvalidParam("sample counts must be >= 1".into()));
        }
        let geo = geometric_mean_predict(&samples[..n], labels)?;
        let arith = arithmetic_mean_predict(&samples[..n], labels)?;
        rows.push(AveragingRow {
            n_samples: n,
            geo_nll: geo.nll,
            arith_nll: arith.nll,
            det_nll: det.nll,
            geo_err: geo.error_rate,
            arith_err: arith.error_rate,
            det_err: det.error_rate,
        });
    }
    Ok(rows)
}

/// Standard error of the per-example NLL mean: the spread the deterministic
/// predictor is compared against.
pub fn nll_standard_error(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, classes) = probs.dims2("nll_standard_error")?;
    let mut vals = Vec::with_capacity(n);
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, n_classes: classes });
        }
        vals.push(-probs.data()[i * classes + label].max(1e-30).ln());
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Ok((var / n as f64).sqrt())
}
