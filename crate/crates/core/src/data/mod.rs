//! Dataset ingestion, preprocessing and synthetic fixtures.

mod idx;
mod preprocess;
mod synthetic;

pub use idx::{load_mnist_idx, write_idx_images, write_idx_labels, ImageShape};
pub use preprocess::{global_contrast_normalize, zca_fit, zca_apply, ZcaTransform};
pub use synthetic::{make_synthetic, SyntheticKind};

use crate::error::{Error, Result};
use crate::network::stream_ids;
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Labeled inputs; `inputs` is `(examples, features)` or
/// `(examples, c, h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Seed of the split that produced this subset, when it came from
    /// [`split_train_valid`].
    pub split_seed: Option<u64>,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if inputs.shape()[0] != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} input rows vs {} labels",
                inputs.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange { label: bad, n_classes });
        }
        Ok(Dataset { inputs, labels, n_classes, split_seed: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature count per example (product of non-batch extents).
    pub fn feature_count(&self) -> usize {
        self.inputs.shape()[1..].iter().product()
    }

    /// Rows and labels at the given indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let flat = self
            .inputs
            .reshaped(vec![self.len(), self.feature_count()])?;
        let inputs = flat.gather_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(Dataset {
            inputs,
            labels,
            n_classes: self.n_classes,
            split_seed: self.split_seed,
        })
    }

    /// First `n` examples (deterministic evaluation subsets).
    pub fn head(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

/// Disjoint, exhaustive, seed-deterministic split into train and validation
/// sets of sizes `total - n_valid` and `n_valid`.
pub fn split_train_valid(ds: &Dataset, n_valid: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_valid == 0 || n_valid >= ds.len() {
        return Err(Error::InvalidParam(format!(
            "n_valid={n_valid} out of range for {} examples",
            ds.len()
        )));
    }
    let mut rng = RngState::new(seed).stream(stream_ids::SPLIT);
    let perm = rng.permutation(ds.len());
    let (valid_idx, train_idx) = perm.split_at(n_valid);
    let mut train = ds.subset(train_idx)?;
    let mut valid = ds.subset(valid_idx)?;
    train.split_seed = Some(seed);
    valid.split_seed = Some(seed);
    Ok((train, valid))
}
