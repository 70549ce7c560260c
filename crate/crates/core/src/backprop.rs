//! Exact reverse-mode gradients through the layer stack.
//!
//! Noise is treated as a constant during the backward pass: gradients are
//! taken with respect to the parameters while holding the sampled `r` from
//! the forward cache fixed, exactly as in standard dropout training.

use crate::error::{Error, Result};
use crate::network::{LayerCache, Network, NetworkCache, ParamKind, StackLayer};
use crate::tensor::Tensor;

/// One gradient tensor per trainable parameter, in the network's parameter
/// visitation order.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub tensors: Vec<Tensor>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        let mut tensors = Vec::new();
        net.visit_params(&mut |t: &Tensor, _k: ParamKind| {
            tensors.push(Tensor::zeros(t.shape().to_vec()).expect("gradient shape"));
        });
        GradientSet { tensors }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|x| x.abs())
            .fold(0.0, f64::max)
    }

    pub fn is_all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.is_all_finite())
    }
}

/// Gradients of the minibatch loss with respect to every parameter, given
/// the cache of the matching `forward_train` call and the loss gradient at
/// the network output.
pub fn backward_pass(
    net: &Network,
    cache: &NetworkCache,
    d_output: &Tensor,
) -> Result<GradientSet> {
    if cache.layers.len() != net.layers.len() {
        return Err(Error::InvalidParam(
            "cache does not match network layer count".into(),
        ));
    }
    let d_output = if d_output.rank() == 1 {
        d_output.reshaped(vec![1, d_output.len()])?
    } else {
        d_output.clone()
    };

    let mut per_layer: Vec<Vec<Tensor>> = Vec::with_capacity(net.layers.len());
    let mut delta = d_output;

    for (idx, (layer, lc)) in net.layers.iter().zip(&cache.layers).enumerate().rev() {
        let input = if idx == 0 {
            &cache.net_input
        } else {
            cache.layers[idx - 1].output()
        };
        match (layer, lc) {
            (StackLayer::Dense(l), LayerCache::Dense { preact, output }) => {
                let d_pre = l.activation.backward(preact, output, &delta)?;
                let d_w = d_pre.matmul_tn(input)?;
                let d_b = d_pre.column_sums()?;
                delta = d_pre.matmul(&l.weights)?;
                per_layer.push(vec![d_w, d_b]);
            }
            (
                StackLayer::Fame(l),
                LayerCache::Fame { noise, factored_noisy, preact, output },
            ) => {
                let d_pre = l.activation.backward(preact, output, &delta)?;
                // dV = d_pre^T (U h . r)
                let d_v = d_pre.matmul_tn(factored_noisy)?;
                let d_b = d_pre.column_sums()?;
                // Back through V then the noise gate.
                let d_noisy = d_pre.matmul(&l.factor_v)?;
                let d_factored = d_noisy.elemwise_mul(noise)?;
                // dU = (V^T d_pre . r) h^T
                let d_u = d_factored.matmul_tn(input)?;
                delta = d_factored.matmul(&l.factor_u)?;
                per_layer.push(vec![d_u, d_v, d_b]);
            }
            (
                StackLayer::Dropout(l),
                LayerCache::Dropout { mask, masked_input, preact, output },
            ) => {
                let d_pre = l.inner.activation.backward(preact, output, &delta)?;
                let d_w = d_pre.matmul_tn(masked_input)?;
                let d_b = d_pre.column_sums()?;
                delta = d_pre.matmul(&l.inner.weights)?.elemwise_mul(mask)?;
                per_layer.push(vec![d_w, d_b]);
            }
            _ => {
                return Err(Error::InvalidParam(format!(
                    "cache kind does not match layer {idx}"
                )))
            }
        }
    }

    per_layer.reverse();
    Ok(GradientSet {
        tensors: per_layer.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::layers::FaMeDenseLayer;
    use crate::network::NoiseStreams;
    use crate::noise::NoiseSpec;
    use crate::rng::RngState;
    use crate::tensor::Tensor;

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = RngState::new(70);
        let net = Network::new(
            None,
            vec![StackLayer::Fame(
                FaMeDenseLayer::init(
                    3,
                    4,
                    3,
                    Activation::Relu,
                    NoiseSpec::Gaussian { mean: 1.0, std: 1.0 },
                    &mut rng,
                )
                .unwrap(),
            )],
        )
        .unwrap();
        let x = Tensor::filled(vec![2, 4], 0.7).unwrap();
        let (out, cache) = net.forward_train(&x, &mut NoiseStreams::new(3, 1)).unwrap();
        let zero = Tensor::zeros(out.shape().to_vec()).unwrap();
        let grads = backward_pass(&net, &cache, &zero).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn fame_gradients_match_hand_chain_rule() {
        // Single identity-activation layer, the 2x2 fixture:
        // U=[[1,2],[3,4]], V=[[1,1],[1,-1]], x=[1,1], r=[2,1].
        // Forward: Ux=[3,7], f=Ux.r=[6,7], out=Vf=[13,-1].
        // With d_out = [1, 1]:
        //   dV = d_out f^T = [[6,7],[6,7]]
        //   d_noisy = V^T d_out = [2, 0]; d_f = d_noisy . r = [4, 0]
        //   dU = d_f x^T = [[4,4],[0,0]]; db = [1,1]
        let layer = FaMeDenseLayer::new(
            Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            Tensor::new(vec![2, 2], vec![1.0, 1.0, 1.0, -1.0]).unwrap(),
            Tensor::zeros(vec![2]).unwrap(),
            Activation::Identity,
            NoiseSpec::Gaussian { mean: 1.0, std: 1.0 },
        )
        .unwrap();
        let net = Network::new(None, vec![StackLayer::Fame(layer.clone())]).unwrap();

        let x = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let r = Tensor::new(vec![1, 2], vec![2.0, 1.0]).unwrap();
        let (out, fame_cache) = layer.forward_train_with_noise(&x, &r).unwrap();
        assert_eq!(out.data(), &[13.0, -1.0]);
        let cache = NetworkCache {
            net_input: x.clone(),
            input_mask: None,
            layers: vec![LayerCache::Fame {
                noise: fame_cache.noise,
                factored_noisy: fame_cache.factored_noisy,
                preact: fame_cache.preact,
                output: out,
            }],
        };
        let d_out = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let grads = backward_pass(&net, &cache, &d_out).unwrap();
        assert_eq!(grads.tensors[0].data(), &[4.0, 4.0, 0.0, 0.0]); // dU
        assert_eq!(grads.tensors[1].data(), &[6.0, 7.0, 6.0, 7.0]); // dV
        assert_eq!(grads.tensors[2].data(), &[1.0, 1.0]); // db
    }
}
