//! Deterministic toy datasets for fast tests and gradient checks.

use crate::error::{Error, Result};
use crate::network::stream_ids;
use crate::rng::RngState;
use crate::tensor::Tensor;

use super::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Three well-separated Gaussian blobs, three classes.
    Blobs,
    /// Four tight blobs at (+-1, +-1) labeled by quadrant parity: not
    /// linearly separable, easy for one hidden ReLU layer.
    Xor,
    /// Two classes split by a fixed hyperplane with a margin: linearly
    /// separable by construction.
    Linear,
}

pub fn make_synthetic(kind: SyntheticKind, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidParam(format!("need n >= 2, got {n}")));
    }
    let mut rng = RngState::new(seed).stream(stream_ids::SYNTHETIC);
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    let n_classes;
    match kind {
        SyntheticKind::Blobs => {
            n_classes = 3;
            let centers = [(-2.0, 0.0), (2.0, 0.0), (0.0, 3.0)];
            for i in 0..n {
                let c = i % 3;
                data.push(centers[c].0 + 0.4 * rng.next_gaussian());
                data.push(centers[c].1 + 0.4 * rng.next_gaussian());
                labels.push(c);
            }
        }
        SyntheticKind::Xor => {
            n_classes = 2;
            for i in 0..n {
                let sx = if i % 2 == 0 { 1.0 } else { -1.0 };
                let sy = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
                data.push(sx + 0.15 * rng.next_gaussian());
                data.push(sy + 0.15 * rng.next_gaussian());
                labels.push(if sx * sy > 0.0 { 1 } else { 0 });
            }
        }
        SyntheticKind::Linear => {
            n_classes = 2;
            // Fixed direction with a margin band rejected, so a linear
            // classifier can reach 100% train accuracy.
            let (wx, wy, b) = (0.8, -0.6, 0.1);
            let mut made = 0;
            while made < n {
                let x = 2.0 * rng.next_f64() - 1.0;
                let y = 2.0 * rng.next_f64() - 1.0;
                let score = wx * x + wy * y + b;
                if score.abs() < 0.15 {
                    continue;
                }
                data.push(x);
                data.push(y);
                labels.push(if score > 0.0 { 1 } else { 0 });
                made += 1;
            }
        }
    }
    Dataset::new(Tensor::new(vec![n, 2], data)?, labels, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_gives_identical_dataset() {
        for kind in [SyntheticKind::Blobs, SyntheticKind::Xor, SyntheticKind::Linear] {
            let a = make_synthetic(kind, 40, 5).unwrap();
            let b = make_synthetic(kind, 40, 5).unwrap();
            assert_eq!(a, b);
            let c = make_synthetic(kind, 40, 6).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn linear_data_is_separable_by_the_generating_plane() {
        let ds = make_synthetic(SyntheticKind::Linear, 200, 3).unwrap();
        let (wx, wy, b) = (0.8, -0.6, 0.1);
        for i in 0..ds.len() {
            let row = ds.inputs.row(i);
            let score = wx * row[0] + wy * row[1] + b;
            assert_eq!(ds.labels[i], if score > 0.0 { 1 } else { 0 });
            assert!(score.abs() >= 0.15);
        }
    }

    #[test]
    fn rejects_tiny_n() {
        assert!(make_synthetic(SyntheticKind::Blobs, 1, 0).is_err());
    }
}
