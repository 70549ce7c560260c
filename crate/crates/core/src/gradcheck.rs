//! Finite-difference verification of analytic gradients.
//!
//! Every check replays the forward pass under a fixed seed so the sampled
//! noise is identical across the perturbed evaluations; the gradient being
//! verified is the pathwise gradient at that fixed noise. Parameters whose
//! perturbation flips a ReLU pre-activation sign are skipped: the loss is
//! not differentiable across the kink and central differences are
//! meaningless there.

use crate::backprop::backward_pass;
use crate::error::{Error, Result};
use crate::layers::{FaMeConvLayer, GatedLayer};
use crate::loss::softmax_cross_entropy;
use crate::network::{Network, NetworkCache, NoiseStreams, StackLayer};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Loss attached to the network output for checking purposes.
#[derive(Debug, Clone)]
pub enum CheckLoss<'a> {
    /// Mean softmax cross-entropy against class labels.
    SoftmaxCe { labels: &'a [usize] },
    /// `0.5 / batch * sum((out - target)^2)`; exact under central differences
    /// for linear networks.
    Quadratic { targets: &'a Tensor },
}

#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn quadratic_loss(out: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    let diff = out.sub(targets)?;
    let batch = if out.rank() == 2 { out.shape()[0] } else { 1 } as f64;
    let loss = 0.5 * diff.data().iter().map(|d| d * d).sum::<f64>() / batch;
    Ok((loss, diff.scaled(1.0 / batch)))
}

/// Concatenated `z > 0` pattern of every ReLU layer in the cache.
fn relu_sign_pattern(net: &Network, cache: &NetworkCache) -> Vec<bool> {
    let mut pattern = Vec::new();
    for (layer, lc) in net.layers.iter().zip(&cache.layers) {
        let act = match layer {
            StackLayer::Dense(l) => l.activation,
            StackLayer::Fame(l) => l.activation,
            StackLayer::Dropout(l) => l.inner.activation,
        };
        if act == crate::activation::Activation::Relu {
            pattern.extend(lc.preact().data().iter().map(|&z| z > 0.0));
        }
    }
    pattern
}

fn eval_network(
    net: &Network,
    x: &Tensor,
    loss: &CheckLoss,
    seed: u64,
) -> Result<(f64, Tensor, NetworkCache, Vec<bool>)> {
    let mut streams = NoiseStreams::new(seed, net.layers.len());
    let (out, cache) = net.forward_train(x, &mut streams)?;
    let signs = relu_sign_pattern(net, &cache);
    let (loss_value, d_out) = match loss {
        CheckLoss::SoftmaxCe { labels } => {
            let (lv, d) = softmax_cross_entropy(&out, labels)?;
            (lv.total, d)
        }
        CheckLoss::Quadratic { targets } => quadratic_loss(&out, targets)?,
    };
    Ok((loss_value, d_out, cache, signs))
}

fn perturbed(net: &Network, tensor_idx: usize, elem: usize, delta: f64) -> Network {
    let mut copy = net.clone();
    let mut i = 0usize;
    copy.visit_params_mut(&mut |t, _| {
        if i == tensor_idx {
            t.data_mut()[elem] += delta;
        }
        i += 1;
    });
    copy
}

/// Checks every parameter of `net` (or a seeded subsample per tensor when
/// `max_params_per_tensor` is set) and reports the worst relative error.
pub fn finite_difference_check(
    net: &Network,
    x: &Tensor,
    loss: CheckLoss,
    eps: f64,
    seed: u64,
    max_params_per_tensor: Option<usize>,
) -> Result<FdReport> {
    if eps <= 0.0 {
        return Err(Error::InvalidParam("fd step must be positive".into()));
    }
    let (_, d_out, cache, base_signs) = eval_network(net, x, &loss, seed)?;
    let analytic = backward_pass(net, &cache, &d_out)?;

    let mut pick_rng = RngState::new(seed).stream(crate::network::stream_ids::GRADCHECK);
    let mut max_rel: f64 = 0.0;
    let mut checked = 0usize;
    let mut skipped = 0usize;

    for (t_idx, grad) in analytic.tensors.iter().enumerate() {
        let n = grad.len();
        let elems: Vec<usize> = match max_params_per_tensor {
            Some(cap) if cap < n => {
                (0..cap).map(|_| (pick_rng.next_u64() % n as u64) as usize).collect()
            }
            _ => (0..n).collect(),
        };
        for elem in elems {
            let plus = perturbed(net, t_idx, elem, eps);
            let minus = perturbed(net, t_idx, elem, -eps);
            let (lp, _, _, signs_p) = eval_network(&plus, x, &loss, seed)?;
            let (lm, _, _, signs_m) = eval_network(&minus, x, &loss, seed)?;
            if signs_p != base_signs || signs_m != base_signs {
                skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            max_rel = max_rel.max(relative_error(grad.data()[elem], numeric));
            checked += 1;
        }
    }
    Ok(FdReport { max_rel_error: max_rel, checked, skipped })
}

/// Finite-difference check of the gated fixture under a quadratic loss.
/// The gated model has no noise, so the forward pass is deterministic.
pub fn finite_difference_check_gated(
    layer: &GatedLayer,
    x: &Tensor,
    z: &Tensor,
    targets: &Tensor,
    eps: f64,
) -> Result<FdReport> {
    let eval = |l: &GatedLayer| -> Result<(f64, Vec<bool>)> {
        let (out, cache) = l.forward_cached(x, z)?;
        let signs: Vec<bool> = cache.preact.data().iter().map(|&v| v > 0.0).collect();
        Ok((quadratic_loss(&out, targets)?.0, signs))
    };

    let (out, cache) = layer.forward_cached(x, z)?;
    let (_, d_out) = quadratic_loss(&out, targets)?;
    let grads = layer.backward(x, z, &cache, &d_out)?;
    let (_, base_signs) = eval(layer)?;

    let tensors: Vec<&Tensor> = vec![&grads.d_u, &grads.d_v, &grads.d_w, &grads.d_bias];
    let mut max_rel: f64 = 0.0;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for (t_idx, grad) in tensors.iter().enumerate() {
        for elem in 0..grad.len() {
            let mutate = |delta: f64| -> GatedLayer {
                let mut c = layer.clone();
                let target = match t_idx {
                    0 => &mut c.factor_u,
                    1 => &mut c.factor_v,
                    2 => &mut c.factor_w,
                    _ => &mut c.bias,
                };
                target.data_mut()[elem] += delta;
                c
            };
            let (lp, sp) = eval(&mutate(eps))?;
            let (lm, sm) = eval(&mutate(-eps))?;
            if sp != base_signs || sm != base_signs {
                skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            max_rel = max_rel.max(relative_error(grad.data()[elem], numeric));
            checked += 1;
        }
    }
    Ok(FdReport { max_rel_error: max_rel, checked, skipped })
}

/// Finite-difference check of the factored convolution fixture; noise is
/// replayed from `seed` on every evaluation.
pub fn finite_difference_check_conv(
    layer: &FaMeConvLayer,
    image: &Tensor,
    targets: &Tensor,
    eps: f64,
    seed: u64,
) -> Result<FdReport> {
    let eval = |l: &FaMeConvLayer| -> Result<(f64, Vec<bool>)> {
        let mut rng = RngState::new(seed);
        let (out, cache) = l.forward_train(image, &mut rng)?;
        let signs: Vec<bool> = cache.preact.data().iter().map(|&v| v > 0.0).collect();
        Ok((quadratic_loss(&out, targets)?.0, signs))
    };

    let mut rng = RngState::new(seed);
    let (out, cache) = layer.forward_train(image, &mut rng)?;
    let (_, d_out) = quadratic_loss(&out, targets)?;
    let grads = layer.backward(image, &cache, &d_out)?;
    let (_, base_signs) = eval(layer)?;

    let tensors: Vec<&Tensor> = vec![&grads.d_spatial, &grads.d_mix, &grads.d_bias];
    let mut max_rel: f64 = 0.0;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for (t_idx, grad) in tensors.iter().enumerate() {
        for elem in 0..grad.len() {
            let mutate = |delta: f64| -> FaMeConvLayer {
                let mut c = layer.clone();
                let target = match t_idx {
                    0 => &mut c.kernel_spatial,
                    1 => &mut c.kernel_mix,
                    _ => &mut c.bias,
                };
                target.data_mut()[elem] += delta;
                c
            };
            let (lp, sp) = eval(&mutate(eps))?;
            let (lm, sm) = eval(&mutate(-eps))?;
            if sp != base_signs || sm != base_signs {
                skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            max_rel = max_rel.max(relative_error(grad.data()[elem], numeric));
            checked += 1;
        }
    }
    Ok(FdReport { max_rel_error: max_rel, checked, skipped })
}
