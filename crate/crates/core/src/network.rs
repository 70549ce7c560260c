//! A feed-forward stack of dense-like layers with optional multiplicative
//! input noise, plus its deterministic test-time counterpart.

use crate::error::{Error, Result};
use crate::layers::{DenseLayer, DropoutWrapper, FaMeDenseLayer};
use crate::layers::{FaMeConvLayer, GatedLayer};
use crate::noise::NoiseSpec;
use crate::rng::RngState;
use crate::tensor::Tensor;

// Keep fixture types visible from here for callers that build mixed models.
pub use crate::layers::{ConvCache, DenseLayer as TestLayer};
#[allow(unused_imports)]
use std::marker::PhantomData as _Unused;

/// Stream ids carving independent RNG streams out of one experiment seed.
pub mod stream_ids {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const INPUT_NOISE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
    pub const SAMPLING: u64 = 6;
    pub const GRADCHECK: u64 = 7;
    /// Per-layer noise streams start here.
    pub const LAYER_NOISE_BASE: u64 = 100;
}

#[derive(Debug, Clone, PartialEq)]
pub enum StackLayer {
    Dense(DenseLayer),
    Fame(FaMeDenseLayer),
    Dropout(DropoutWrapper),
}

impl StackLayer {
    pub fn n_in(&self) -> usize {
        match self {
            StackLayer::Dense(l) => l.n_in(),
            StackLayer::Fame(l) => l.n_in(),
            StackLayer::Dropout(l) => l.inner.n_in(),
        }
    }

    pub fn n_out(&self) -> usize {
        match self {
            StackLayer::Dense(l) => l.n_out(),
            StackLayer::Fame(l) => l.n_out(),
            StackLayer::Dropout(l) => l.inner.n_out(),
        }
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        match self {
            StackLayer::Dense(l) => l.weights.len() + l.bias.len(),
            StackLayer::Fame(l) => l.factor_u.len() + l.factor_v.len() + l.bias.len(),
            StackLayer::Dropout(l) => l.inner.weights.len() + l.inner.bias.len(),
        }
    }

    /// The deterministic test-time layer (collapse or expectation scaling).
    pub fn to_test_layer(&self) -> Result<DenseLayer> {
        match self {
            StackLayer::Dense(l) => Ok(l.clone()),
            StackLayer::Fame(l) => l.to_test_layer(),
            StackLayer::Dropout(l) => Ok(l.to_test_layer()),
        }
    }
}

/// Which role a parameter tensor plays; max-norm projection applies only to
/// weight rows, never biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Per-layer noise RNG streams, one per noise site, so layers stay
/// independent and states are cheap to checkpoint.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    pub input: RngState,
    pub layers: Vec<RngState>,
}

impl NoiseStreams {
    pub fn new(seed: u64, n_layers: usize) -> Self {
        let root = RngState::new(seed);
        NoiseStreams {
            input: root.stream(stream_ids::INPUT_NOISE),
            layers: (0..n_layers)
                .map(|i| root.stream(stream_ids::LAYER_NOISE_BASE + i as u64))
                .collect(),
        }
    }
}

/// Values cached by one training forward pass, consumed by backprop.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense {
        preact: Tensor,
        output: Tensor,
    },
    Fame {
        noise: Tensor,
        factored_noisy: Tensor,
        preact: Tensor,
        output: Tensor,
    },
    Dropout {
        mask: Tensor,
        masked_input: Tensor,
        preact: Tensor,
        output: Tensor,
    },
}

impl LayerCache {
    pub fn output(&self) -> &Tensor {
        match self {
            LayerCache::Dense { output, .. }
            | LayerCache::Fame { output, .. }
            | LayerCache::Dropout { output, .. } => output,
        }
    }

    pub fn preact(&self) -> &Tensor {
        match self {
            LayerCache::Dense { preact, .. }
            | LayerCache::Fame { preact, .. }
            | LayerCache::Dropout { preact, .. } => preact,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetworkCache {
    /// The tensor actually fed to layer 0 (input after input noise, if any).
    pub net_input: Tensor,
    pub input_mask: Option<Tensor>,
    pub layers: Vec<LayerCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// Multiplicative noise on the raw input vector during training.
    pub input_noise: Option<NoiseSpec>,
    pub layers: Vec<StackLayer>,
}

impl Network {
    pub fn new(input_noise: Option<NoiseSpec>, layers: Vec<StackLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParam("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].n_out() != w[1].n_in() {
                return Err(Error::ShapeMismatch(format!(
                    "layer extents do not chain: {} out vs {} in",
                    w[0].n_out(),
                    w[1].n_in()
                )));
            }
        }
        if let Some(n) = input_noise {
            n.validate()?;
        }
        Ok(Network { input_noise, layers })
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().expect("nonempty").n_out()
    }

    /// Training forward with fresh noise everywhere, one vector per example.
    pub fn forward_train(
        &self,
        x: &Tensor,
        streams: &mut NoiseStreams,
    ) -> Result<(Tensor, NetworkCache)> {
        if streams.layers.len() != self.layers.len() {
            return Err(Error::InvalidParam(format!(
                "{} noise streams for {} layers",
                streams.layers.len(),
                self.layers.len()
            )));
        }
        let batch = if x.rank() == 1 { 1 } else { x.shape()[0] };
        let x2 = if x.rank() == 1 {
            x.reshaped(vec![1, x.len()])?
        } else {
            x.clone()
        };

        let (net_input, input_mask) = match self.input_noise {
            Some(spec) => {
                let mask = spec.sample_matrix(batch, self.n_in(), &mut streams.input)?;
                (x2.elemwise_mul(&mask)?, Some(mask))
            }
            None => (x2, None),
        };

        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = net_input.clone();
        for (layer, rng) in self.layers.iter().zip(streams.layers.iter_mut()) {
            let (out, cache) = match layer {
                StackLayer::Dense(l) => {
                    let (out, preact) = l.forward_cached(&h)?;
                    let c = LayerCache::Dense { preact, output: out.clone() };
                    (out, c)
                }
                StackLayer::Fame(l) => {
                    let (out, c) = l.forward_train(&h, rng)?;
                    let c = LayerCache::Fame {
                        noise: c.noise,
                        factored_noisy: c.factored_noisy,
                        preact: c.preact,
                        output: out.clone(),
                    };
                    (out, c)
                }
                StackLayer::Dropout(l) => {
                    let (out, c) = l.forward_train(&h, rng)?;
                    let c = LayerCache::Dropout {
                        mask: c.mask,
                        masked_input: c.masked_input,
                        preact: c.preact,
                        output: out.clone(),
                    };
                    (out, c)
                }
            };
            caches.push(cache);
            h = out;
        }
        Ok((h, NetworkCache { net_input, input_mask, layers: caches }))
    }

    /// Training forward with all noise forced to exactly one (`r == 1`).
    pub fn forward_train_unit_noise(&self, x: &Tensor) -> Result<Tensor> {
        let x2 = if x.rank() == 1 {
            x.reshaped(vec![1, x.len()])?
        } else {
            x.clone()
        };
        let batch = x2.shape()[0];
        let mut h = x2;
        for layer in &self.layers {
            h = match layer {
                StackLayer::Dense(l) => l.forward(&h)?,
                StackLayer::Fame(l) => {
                    let ones = Tensor::filled(vec![batch, l.factor_width()], 1.0)?;
                    l.forward_train_with_noise(&h, &ones)?.0
                }
                StackLayer::Dropout(l) => {
                    let ones = Tensor::filled(vec![batch, l.inner.n_in()], 1.0)?;
                    l.forward_train_with_noise(&h, &ones)?.0
                }
            };
        }
        Ok(h)
    }

    /// The deterministic mean network: collapsed factor pairs, expectation-
    /// scaled dropout weights, and input-noise expectation folded into the
    /// first layer.
    pub fn to_test_network(&self) -> Result<TestNetwork> {
        let mut layers: Vec<DenseLayer> = self
            .layers
            .iter()
            .map(|l| l.to_test_layer())
            .collect::<Result<_>>()?;
        if let Some(spec) = self.input_noise {
            let e = spec.expectation();
            if e != 1.0 {
                layers[0].weights = layers[0].weights.scaled(e);
            }
        }
        Ok(TestNetwork { layers })
    }

    /// Visits every trainable tensor in a fixed declaration order
    /// (per layer: factors/weights first, then bias).
    pub fn visit_params(&self, f: &mut impl FnMut(&Tensor, ParamKind)) {
        for layer in &self.layers {
            match layer {
                StackLayer::Dense(l) => {
                    f(&l.weights, ParamKind::Weight);
                    f(&l.bias, ParamKind::Bias);
                }
                StackLayer::Fame(l) => {
                    f(&l.factor_u, ParamKind::Weight);
                    f(&l.factor_v, ParamKind::Weight);
                    f(&l.bias, ParamKind::Bias);
                }
                StackLayer::Dropout(l) => {
                    f(&l.inner.weights, ParamKind::Weight);
                    f(&l.inner.bias, ParamKind::Bias);
                }
            }
        }
    }

    /// Mutable variant of [`Network::visit_params`], same order.
    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&mut Tensor, ParamKind)) {
        for layer in &mut self.layers {
            match layer {
                StackLayer::Dense(l) => {
                    f(&mut l.weights, ParamKind::Weight);
                    f(&mut l.bias, ParamKind::Bias);
                }
                StackLayer::Fame(l) => {
                    f(&mut l.factor_u, ParamKind::Weight);
                    f(&mut l.factor_v, ParamKind::Weight);
                    f(&mut l.bias, ParamKind::Bias);
                }
                StackLayer::Dropout(l) => {
                    f(&mut l.inner.weights, ParamKind::Weight);
                    f(&mut l.inner.bias, ParamKind::Bias);
                }
            }
        }
    }

    /// Trainable scalar count of the factored training model.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Parameter count of the collapsed test model: independent of factor
    /// widths by construction.
    pub fn effective_param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.n_out() * l.n_in() + l.n_out())
            .sum()
    }

    /// Frobenius norms of each layer's effective weight matrix (`W = VU` for
    /// factored layers, raw `W` otherwise).
    pub fn effective_weight_norms(&self) -> Result<Vec<f64>> {
        self.layers
            .iter()
            .map(|l| {
                Ok(match l {
                    StackLayer::Dense(d) => d.weights.frobenius_norm(),
                    StackLayer::Dropout(d) => d.inner.weights.frobenius_norm(),
                    StackLayer::Fame(f) => {
                        crate::layers::collapse_weights(&f.factor_u, &f.factor_v)?
                            .frobenius_norm()
                    }
                })
            })
            .collect()
    }
}

/// Deterministic test-time network: plain dense layers only.
#[derive(Debug, Clone, PartialEq)]
pub struct TestNetwork {
    pub layers: Vec<DenseLayer>,
}

impl TestNetwork {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Forward pass exposing every layer's post-activation output, for
    /// sparsity monitoring.
    pub fn forward_with_activations(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut h = x.clone();
        let mut acts = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            h = layer.forward(&h)?;
            acts.push(h.clone());
        }
        Ok((h, acts))
    }
}

/// Standalone fixture models also get gradient-checked; re-export their
/// types so callers need only this module.
pub type GatedFixture = GatedLayer;
pub type ConvFixture = FaMeConvLayer;
