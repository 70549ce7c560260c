//! Factored-mean (FaMe) regularization for feed-forward networks, from
//! scratch: weight matrices are learned as a product `W = V U` with
//! multiplicative noise injected on the factor activations during training,
//! while the deterministic test network uses the collapsed product. Dropout
//! baselines (Bernoulli masks and mean-1 Gaussian noise), the reference
//! optimization recipe (Nesterov momentum ramp, per-epoch annealing,
//! max-norm constraints) and the model-averaging analyses live alongside.

pub mod activation;
pub mod averaging;
pub mod backprop;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod noise;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;

pub use activation::Activation;
pub use error::{Error, Result};
pub use network::{Network, NoiseStreams, StackLayer, TestNetwork};
pub use noise::NoiseSpec;
pub use rng::RngState;
pub use tensor::Tensor;
