//! Nesterov accelerated gradient with per-epoch learning-rate annealing, a
//! linear momentum ramp, and per-unit max-norm weight constraints.

use crate::backprop::GradientSet;
use crate::error::{Error, Result};
use crate::network::{Network, ParamKind};
use crate::tensor::Tensor;

/// `lr0 * anneal^epoch`; annealing is keyed to epoch boundaries.
pub fn lr_at_epoch(lr0: f64, anneal: f64, epoch: usize) -> f64 {
    lr0 * anneal.powi(epoch as i32)
}

/// Linear ramp from `m0` to `m_final` over `ramp_epochs`, clamped at the top.
pub fn momentum_at_epoch(m0: f64, m_final: f64, ramp_epochs: usize, epoch: usize) -> f64 {
    let ramp = ramp_epochs.max(1) as f64;
    (m0 + (m_final - m0) * epoch as f64 / ramp).min(m_final)
}

/// Rescales any row of `w` whose L2 norm exceeds `c` to norm exactly `c`.
/// Rows are the incoming weight vectors of output units; biases are never
/// constrained.
pub fn max_norm_project(w: &mut Tensor, c: f64) -> Result<()> {
    if c <= 0.0 {
        return Err(Error::InvalidParam(format!("max-norm bound must be > 0, got {c}")));
    }
    if w.rank() != 2 {
        // Rank-1 tensors are biases in this codebase; treat as a single row
        // only when a caller explicitly passes one.
        return Err(Error::ShapeMismatch(format!(
            "max_norm_project expects a rank-2 weight matrix, got {:?}",
            w.shape()
        )));
    }
    let (rows, cols) = w.dims2("max_norm_project")?;
    for r in 0..rows {
        let row = &mut w.data_mut()[r * cols..(r + 1) * cols];
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > c {
            let scale = c / norm;
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
    }
    Ok(())
}

/// Velocity buffers and schedule parameters of the optimizer.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub velocity: Vec<Tensor>,
    pub lr0: f64,
    pub anneal: f64,
    pub momentum0: f64,
    pub momentum_final: f64,
    pub ramp_epochs: usize,
    pub epoch: usize,
}

impl OptimizerState {
    pub fn new(
        net: &Network,
        lr0: f64,
        anneal: f64,
        momentum0: f64,
        momentum_final: f64,
        ramp_epochs: usize,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum0)
            || !(momentum0..1.0).contains(&momentum_final.max(momentum0))
            || momentum_final < momentum0
            || momentum_final >= 1.0
        {
            return Err(Error::InvalidParam(format!(
                "need 0 <= m0 <= m_final < 1, got m0={momentum0} m_final={momentum_final}"
            )));
        }
        if !(anneal > 0.0 && anneal <= 1.0) {
            return Err(Error::InvalidParam(format!("need 0 < anneal <= 1, got {anneal}")));
        }
        if lr0 <= 0.0 {
            return Err(Error::InvalidParam(format!("need lr0 > 0, got {lr0}")));
        }
        let mut velocity = Vec::new();
        net.visit_params(&mut |t: &Tensor, _| {
            velocity.push(Tensor::zeros(t.shape().to_vec()).expect("velocity shape"));
        });
        Ok(OptimizerState {
            velocity,
            lr0,
            anneal,
            momentum0,
            momentum_final,
            ramp_epochs,
            epoch: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        lr_at_epoch(self.lr0, self.anneal, self.epoch)
    }

    pub fn momentum(&self) -> f64 {
        momentum_at_epoch(self.momentum0, self.momentum_final, self.ramp_epochs, self.epoch)
    }

    /// Adds `momentum * velocity` to every parameter: the lookahead point at
    /// which Nesterov gradients are evaluated. Returns the saved parameters
    /// for exact restoration.
    pub fn apply_lookahead(&self, net: &mut Network) -> Vec<Tensor> {
        let mu = self.momentum();
        let mut saved = Vec::with_capacity(self.velocity.len());
        let mut i = 0;
        net.visit_params_mut(&mut |t, _| {
            saved.push(t.clone());
            for (p, &v) in t.data_mut().iter_mut().zip(self.velocity[i].data()) {
                *p += mu * v;
            }
            i += 1;
        });
        saved
    }

    /// Restores parameters saved by [`OptimizerState::apply_lookahead`].
    pub fn restore(&self, net: &mut Network, saved: Vec<Tensor>) {
        let mut it = saved.into_iter();
        net.visit_params_mut(&mut |t, _| {
            *t = it.next().expect("saved parameter");
        });
    }
}

/// One Nesterov update: `v <- mu v - lr g; theta <- theta + v`, where `g`
/// was evaluated at the lookahead point `theta + mu v`.
pub fn nesterov_step(net: &mut Network, grads: &GradientSet, state: &mut OptimizerState) -> Result<()> {
    if grads.tensors.len() != state.velocity.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient tensors vs {} velocity buffers",
            grads.tensors.len(),
            state.velocity.len()
        )));
    }
    let mu = state.momentum();
    let lr = state.lr();
    for (v, g) in state.velocity.iter_mut().zip(&grads.tensors) {
        if v.shape() != g.shape() {
            return Err(Error::ShapeMismatch(format!(
                "velocity {:?} vs gradient {:?}",
                v.shape(),
                g.shape()
            )));
        }
        for (vv, &gg) in v.data_mut().iter_mut().zip(g.data()) {
            *vv = mu * *vv - lr * gg;
        }
    }
    let mut i = 0;
    net.visit_params_mut(&mut |t, _| {
        for (p, &v) in t.data_mut().iter_mut().zip(state.velocity[i].data()) {
            *p += v;
        }
        i += 1;
    });
    Ok(())
}

/// Applies the max-norm constraint to every weight matrix of the network
/// (factor matrices U and V are constrained independently).
pub fn apply_max_norm(net: &mut Network, c: f64) -> Result<()> {
    let mut result = Ok(());
    net.visit_params_mut(&mut |t, kind| {
        if result.is_ok() && kind == ParamKind::Weight {
            result = max_norm_project(t, c);
        }
    });
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::layers::DenseLayer;
    use crate::network::StackLayer;
    use crate::rng::RngState;

    fn scalar_net(theta: f64) -> Network {
        Network::new(
            None,
            vec![StackLayer::Dense(
                DenseLayer::new(
                    Tensor::new(vec![1, 1], vec![theta]).unwrap(),
                    Tensor::zeros(vec![1]).unwrap(),
                    Activation::Identity,
                )
                .unwrap(),
            )],
        )
        .unwrap()
    }

    fn first_weight(net: &Network) -> f64 {
        match &net.layers[0] {
            StackLayer::Dense(l) => l.weights.data()[0],
            _ => unreachable!(),
        }
    }

    fn grads_for(net: &Network, w_grad: f64, b_grad: f64) -> GradientSet {
        let mut g = GradientSet::zeros_like(net);
        g.tensors[0].data_mut()[0] = w_grad;
        g.tensors[1].data_mut()[0] = b_grad;
        g
    }

    #[test]
    fn lr_schedule_examples() {
        assert_eq!(lr_at_epoch(0.1, 0.995, 0), 0.1);
        assert!((lr_at_epoch(0.1, 0.995, 1) - 0.0995).abs() < 1e-15);
        assert!((lr_at_epoch(0.1, 0.995, 2) - 0.0990025).abs() < 1e-15);
        // Strictly decreasing for anneal < 1.
        for e in 0..50 {
            assert!(lr_at_epoch(0.1, 0.995, e + 1) < lr_at_epoch(0.1, 0.995, e));
        }
    }

    #[test]
    fn momentum_schedule_examples() {
        assert_eq!(momentum_at_epoch(0.5, 0.9, 10, 0), 0.5);
        assert!((momentum_at_epoch(0.5, 0.9, 10, 5) - 0.7).abs() < 1e-15);
        assert_eq!(momentum_at_epoch(0.5, 0.9, 10, 10), 0.9);
        assert_eq!(momentum_at_epoch(0.5, 0.9, 10, 25), 0.9);
        // Non-decreasing and clamped.
        for e in 0..30 {
            assert!(
                momentum_at_epoch(0.5, 0.9, 10, e + 1) >= momentum_at_epoch(0.5, 0.9, 10, e)
            );
            assert!(momentum_at_epoch(0.5, 0.9, 10, e) <= 0.9);
        }
    }

    #[test]
    fn scalar_recurrence_matches_hand_values() {
        // theta0=1, v0=0, g=1, lr=0.1, mu=0.9:
        // v1=-0.1, theta1=0.9; v2=-0.19, theta2=0.71.
        let mut net = scalar_net(1.0);
        let mut state = OptimizerState::new(&net, 0.1, 1.0, 0.9, 0.9, 1).unwrap();
        let g = grads_for(&net, 1.0, 0.0);

        nesterov_step(&mut net, &g, &mut state).unwrap();
        assert!((first_weight(&net) - 0.9).abs() < 1e-15);
        assert!((state.velocity[0].data()[0] + 0.1).abs() < 1e-15);

        nesterov_step(&mut net, &g, &mut state).unwrap();
        assert!((first_weight(&net) - 0.71).abs() < 1e-15);
        assert!((state.velocity[0].data()[0] + 0.19).abs() < 1e-15);
    }

    #[test]
    fn zero_momentum_is_bitwise_plain_sgd() {
        let mut rng = RngState::new(90);
        for _ in 0..20 {
            let theta = rng.next_gaussian();
            let g = rng.next_gaussian();
            let lr = 0.05 + 0.1 * rng.next_f64();

            let mut net = scalar_net(theta);
            let mut state = OptimizerState::new(&net, lr, 1.0, 0.0, 0.0, 1).unwrap();
            let grads = grads_for(&net, g, 0.0);
            nesterov_step(&mut net, &grads, &mut state).unwrap();

            let sgd = theta - lr * g;
            assert_eq!(first_weight(&net), sgd);
        }
    }

    #[test]
    fn zero_gradient_coasts_on_momentum() {
        let mut net = scalar_net(1.0);
        let mut state = OptimizerState::new(&net, 0.1, 1.0, 0.9, 0.9, 1).unwrap();
        state.velocity[0].data_mut()[0] = 0.2;
        let grads = grads_for(&net, 0.0, 0.0);
        nesterov_step(&mut net, &grads, &mut state).unwrap();
        assert!((first_weight(&net) - 1.18).abs() < 1e-15);
    }

    #[test]
    fn max_norm_examples() {
        // Row norm 1 with c=2: unchanged.
        let mut w = Tensor::new(vec![1, 2], vec![0.6, 0.8]).unwrap();
        max_norm_project(&mut w, 2.0).unwrap();
        assert_eq!(w.data(), &[0.6, 0.8]);

        // Row [3,4] (norm 5) with c=2 -> [1.2, 1.6].
        let mut w = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        max_norm_project(&mut w, 2.0).unwrap();
        assert!((w.data()[0] - 1.2).abs() < 1e-15);
        assert!((w.data()[1] - 1.6).abs() < 1e-15);

        assert!(max_norm_project(&mut w, 0.0).is_err());
    }

    #[test]
    fn lookahead_restore_is_bit_exact() {
        let mut rng = RngState::new(91);
        let mut net = Network::new(
            None,
            vec![StackLayer::Dense(DenseLayer::init(3, 4, Activation::Relu, &mut rng))],
        )
        .unwrap();
        let reference = net.clone();
        let mut state = OptimizerState::new(&net, 0.1, 0.995, 0.5, 0.9, 10).unwrap();
        for v in &mut state.velocity {
            for x in v.data_mut() {
                *x = rng.next_gaussian();
            }
        }
        let saved = state.apply_lookahead(&mut net);
        assert_ne!(net, reference);
        state.restore(&mut net, saved);
        assert_eq!(net, reference);
    }

    #[test]
    fn constructor_validates_schedule_parameters() {
        let net = scalar_net(0.0);
        assert!(OptimizerState::new(&net, 0.1, 0.995, 0.9, 0.5, 10).is_err()); // m0 > mf
        assert!(OptimizerState::new(&net, 0.1, 0.995, 0.5, 1.0, 10).is_err()); // mf = 1
        assert!(OptimizerState::new(&net, 0.1, 0.0, 0.5, 0.9, 10).is_err()); // anneal 0
        assert!(OptimizerState::new(&net, 0.0, 0.995, 0.5, 0.9, 10).is_err()); // lr 0
        assert!(OptimizerState::new(&net, 0.1, 1.0, 0.5, 0.9, 10).is_ok());
    }
}
