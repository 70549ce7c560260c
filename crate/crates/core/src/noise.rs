//! Multiplicative-noise distributions.
//!
//! Training injects independent samples from one of two families: Bernoulli
//! masks (classic dropout) or Gaussian factors (mean-1 Gaussian noise). The
//! expectation of the distribution is what the deterministic test procedures
//! substitute for the noise.

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// Each draw is 1 with probability `p`, else 0.
    Bernoulli { p: f64 },
    /// Each draw is `mean + std * z` with standard normal `z`.
    Gaussian { mean: f64, std: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Bernoulli { p } => {
                if p > 0.0 && p <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParam(format!("Bernoulli p={p}, need 0 < p <= 1")))
                }
            }
            NoiseSpec::Gaussian { mean, std } => {
                if std >= 0.0 && mean.is_finite() && std.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParam(format!(
                        "Gaussian mean={mean} std={std}, need finite mean and std >= 0"
                    )))
                }
            }
        }
    }

    /// E[r]: `p` for Bernoulli, `mean` for Gaussian.
    pub fn expectation(&self) -> f64 {
        match *self {
            NoiseSpec::Bernoulli { p } => p,
            NoiseSpec::Gaussian { mean, .. } => mean,
        }
    }

    pub fn std_dev(&self) -> f64 {
        match *self {
            NoiseSpec::Bernoulli { p } => (p * (1.0 - p)).sqrt(),
            NoiseSpec::Gaussian { std, .. } => std,
        }
    }

    fn draw(&self, rng: &mut RngState) -> f64 {
        match *self {
            NoiseSpec::Bernoulli { p } => {
                if rng.next_f64() < p {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseSpec::Gaussian { mean, std } => mean + std * rng.next_gaussian(),
        }
    }

    /// `n` independent draws as a rank-1 tensor.
    pub fn sample_vector(&self, n: usize, rng: &mut RngState) -> Result<Tensor> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidParam("noise vector length must be >= 1".into()));
        }
        let data = (0..n).map(|_| self.draw(rng)).collect();
        Tensor::new(vec![n], data)
    }

    /// `rows x cols` independent draws; one fresh row per example in a batch.
    pub fn sample_matrix(&self, rows: usize, cols: usize, rng: &mut RngState) -> Result<Tensor> {
        self.validate()?;
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParam("noise matrix extents must be >= 1".into()));
        }
        let data = (0..rows * cols).map(|_| self.draw(rng)).collect();
        Tensor::new(vec![rows, cols], data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_enforces_parameter_ranges() {
        assert!(NoiseSpec::Bernoulli { p: 0.0 }.validate().is_err());
        assert!(NoiseSpec::Bernoulli { p: 1.5 }.validate().is_err());
        assert!(NoiseSpec::Bernoulli { p: 1.0 }.validate().is_ok());
        assert!(NoiseSpec::Gaussian { mean: 1.0, std: -0.1 }.validate().is_err());
        assert!(NoiseSpec::Gaussian { mean: 1.0, std: 0.0 }.validate().is_ok());
        let bad = NoiseSpec::Gaussian { mean: 1.0, std: -1.0 };
        assert!(bad.sample_vector(3, &mut RngState::new(0)).is_err());
    }

    #[test]
    fn zero_variance_gaussian_yields_all_ones() {
        let spec = NoiseSpec::Gaussian { mean: 1.0, std: 0.0 };
        let mut rng = RngState::new(4);
        let v = spec.sample_vector(128, &mut rng).unwrap();
        assert!(v.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn bernoulli_p1_yields_all_ones() {
        let spec = NoiseSpec::Bernoulli { p: 1.0 };
        let mut rng = RngState::new(4);
        let v = spec.sample_vector(128, &mut rng).unwrap();
        assert!(v.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn bernoulli_draws_are_binary() {
        let spec = NoiseSpec::Bernoulli { p: 0.5 };
        let mut rng = RngState::new(4);
        let v = spec.sample_vector(1000, &mut rng).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn empirical_mean_matches_expectation_within_clt_bound() {
        // 5 sigma of std/sqrt(n) for a million draws.
        let n = 1_000_000usize;
        let specs = [
            NoiseSpec::Gaussian { mean: 1.0, std: 1.0 },
            NoiseSpec::Gaussian { mean: 1.0, std: 0.5 },
            NoiseSpec::Bernoulli { p: 0.5 },
            NoiseSpec::Bernoulli { p: 0.9 },
        ];
        for (i, spec) in specs.iter().enumerate() {
            let mut rng = RngState::new(1234 + i as u64);
            let v = spec.sample_vector(n, &mut rng).unwrap();
            let mean = v.data().iter().sum::<f64>() / n as f64;
            let bound = 5.0 * spec.std_dev() / (n as f64).sqrt();
            assert!(
                (mean - spec.expectation()).abs() < bound,
                "{spec:?}: mean={mean} bound={bound}"
            );
        }
    }

    #[test]
    fn gaussian_unit_std_mean_within_half_percent_of_one() {
        let spec = NoiseSpec::Gaussian { mean: 1.0, std: 1.0 };
        let mut rng = RngState::new(77);
        let v = spec.sample_vector(1_000_000, &mut rng).unwrap();
        let mean = v.data().iter().sum::<f64>() / 1e6;
        assert!((mean - 1.0).abs() < 0.005, "mean={mean}");
    }
}
