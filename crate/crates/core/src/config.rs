//! Experiment configuration: a flat `key=value` text format, one pair per
//! line, `#` comments, with layer blocks as indexed keys
//! (`layer.0.kind=fame_dense`). The format is diffable and the canonical
//! rendering is embedded in checkpoints so resumed runs can verify they are
//! continuing the same experiment.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::activation::Activation;
use crate::data::SyntheticKind;
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    FameDense,
    DropoutDense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerConfig {
    pub kind: LayerKind,
    pub out: usize,
    /// Factor width for factored layers; 0 selects `min(n_out, n_in)`.
    pub factor: usize,
    /// Factor noise for `fame_dense`, input-mask noise for `dropout_dense`.
    pub noise: Option<NoiseSpec>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Synthetic {
        kind: SyntheticKind,
        n_train: usize,
        n_test: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Primary budget when nonzero; epochs are derived from it.
    pub total_updates: usize,
    pub lr0: f64,
    pub anneal: f64,
    pub momentum0: f64,
    pub momentum_final: f64,
    pub momentum_ramp_epochs: usize,
    /// Per-unit max L2 norm; 0 disables the constraint.
    pub max_norm: f64,
    pub eval_every_epochs: usize,
    /// Extra checkpoints every N epochs; 0 writes only the final one.
    pub checkpoint_every_epochs: usize,
    pub n_samples: usize,
    /// Validation examples carved from the training set; 0 trains on all.
    pub n_valid: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    pub input_noise: Option<NoiseSpec>,
    pub gcn: bool,
    pub zca: bool,
    pub zca_epsilon: f64,
    pub sparsity_eval_examples: usize,
    pub dataset: DatasetConfig,
    pub metrics_out: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
    pub layers: Vec<LayerConfig>,
}

fn parse_noise(v: &str) -> Result<Option<NoiseSpec>> {
    if v == "none" {
        return Ok(None);
    }
    let parts: Vec<&str> = v.split(':').collect();
    let bad = || Error::Config(format!("bad noise spec '{v}'"));
    let spec = match parts.as_slice() {
        ["bernoulli", p] => NoiseSpec::Bernoulli { p: p.parse().map_err(|_| bad())? },
        ["gaussian", m, s] => NoiseSpec::Gaussian {
            mean: m.parse().map_err(|_| bad())?,
            std: s.parse().map_err(|_| bad())?,
        },
        _ => return Err(bad()),
    };
    spec.validate()?;
    Ok(Some(spec))
}

fn noise_to_string(n: Option<NoiseSpec>) -> String {
    match n {
        None => "none".into(),
        Some(NoiseSpec::Bernoulli { p }) => format!("bernoulli:{p}"),
        Some(NoiseSpec::Gaussian { mean, std }) => format!("gaussian:{mean}:{std}"),
    }
}

fn parse_activation(v: &str) -> Result<Activation> {
    match v {
        "identity" => Ok(Activation::Identity),
        "relu" => Ok(Activation::Relu),
        "softmax" => Ok(Activation::Softmax),
        _ => Err(Error::Config(format!("unknown activation '{v}'"))),
    }
}

fn activation_to_string(a: Activation) -> &'static str {
    match a {
        Activation::Identity => "identity",
        Activation::Relu => "relu",
        Activation::Softmax => "softmax",
    }
}

/// Parses the text form. Unknown keys, duplicates, missing required keys and
/// inconsistent extents are all rejected before any training starts.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
        })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if kv.insert(k.clone(), v).is_some() {
            return Err(Error::Config(format!("duplicate key '{k}'")));
        }
    }

    fn req(kv: &mut BTreeMap<String, String>, k: &str) -> Result<String> {
        kv.remove(k)
            .ok_or_else(|| Error::Config(format!("missing required key '{k}'")))
    }
    macro_rules! parse {
        ($v:expr, $k:expr) => {{
            let v = $v;
            v.parse()
                .map_err(|_| Error::Config(format!("bad value for '{}': '{}'", $k, v)))
        }};
    }

    let seed: u64 = parse!(req(&mut kv, "seed")?, "seed")?;
    let batch_size: usize = parse!(req(&mut kv, "batch_size")?, "batch_size")?;
    let epochs: usize = parse!(req(&mut kv, "epochs")?, "epochs")?;
    let total_updates: usize = match kv.remove("total_updates") {
        Some(v) => parse!(v, "total_updates")?,
        None => 0,
    };
    let lr0: f64 = parse!(req(&mut kv, "lr0")?, "lr0")?;
    let anneal: f64 = parse!(req(&mut kv, "anneal")?, "anneal")?;
    let momentum0: f64 = parse!(req(&mut kv, "momentum0")?, "momentum0")?;
    let momentum_final: f64 = parse!(req(&mut kv, "momentum_final")?, "momentum_final")?;
    let momentum_ramp_epochs: usize =
        parse!(req(&mut kv, "momentum_ramp_epochs")?, "momentum_ramp_epochs")?;
    let max_norm: f64 = parse!(req(&mut kv, "max_norm")?, "max_norm")?;
    let eval_every_epochs: usize = match kv.remove("eval_every_epochs") {
        Some(v) => parse!(v, "eval_every_epochs")?,
        None => 1,
    };
    let checkpoint_every_epochs: usize = match kv.remove("checkpoint_every_epochs") {
        Some(v) => parse!(v, "checkpoint_every_epochs")?,
        None => 0,
    };
    let n_samples: usize = match kv.remove("n_samples") {
        Some(v) => parse!(v, "n_samples")?,
        None => 1000,
    };
    let n_valid: usize = match kv.remove("n_valid") {
        Some(v) => parse!(v, "n_valid")?,
        None => 0,
    };
    let input_dim: usize = parse!(req(&mut kv, "input_dim")?, "input_dim")?;
    let n_classes: usize = parse!(req(&mut kv, "n_classes")?, "n_classes")?;
    let input_noise = parse_noise(&kv.remove("input_noise").unwrap_or_else(|| "none".into()))?;
    let gcn: bool = match kv.remove("gcn") {
        Some(v) => parse!(v, "gcn")?,
        None => false,
    };
    let zca: bool = match kv.remove("zca") {
        Some(v) => parse!(v, "zca")?,
        None => false,
    };
    let zca_epsilon: f64 = match kv.remove("zca_epsilon") {
        Some(v) => parse!(v, "zca_epsilon")?,
        None => 1e-5,
    };
    let sparsity_eval_examples: usize = match kv.remove("sparsity_eval_examples") {
        Some(v) => parse!(v, "sparsity_eval_examples")?,
        None => 1000,
    };

    let dataset = match req(&mut kv, "dataset")?.as_str() {
        "mnist" => DatasetConfig::Mnist {
            train_images: PathBuf::from(req(&mut kv, "train_images")?),
            train_labels: PathBuf::from(req(&mut kv, "train_labels")?),
            test_images: PathBuf::from(req(&mut kv, "test_images")?),
            test_labels: PathBuf::from(req(&mut kv, "test_labels")?),
        },
        "synthetic" => {
            let kind = match req(&mut kv, "synthetic_kind")?.as_str() {
                "blobs" => SyntheticKind::Blobs,
                "xor" => SyntheticKind::Xor,
                "linear" => SyntheticKind::Linear,
                other => {
                    return Err(Error::Config(format!("unknown synthetic kind '{other}'")))
                }
            };
            DatasetConfig::Synthetic {
                kind,
                n_train: parse!(req(&mut kv, "n_train")?, "n_train")?,
                n_test: parse!(req(&mut kv, "n_test")?, "n_test")?,
            }
        }
        other => return Err(Error::Config(format!("unknown dataset '{other}'"))),
    };

    let metrics_out = kv.remove("metrics_out").map(PathBuf::from);
    let checkpoint_out = kv.remove("checkpoint_out").map(PathBuf::from);

    // Layer blocks: indices must be contiguous from zero.
    let mut layers = Vec::new();
    for i in 0.. {
        let prefix = format!("layer.{i}.");
        let kind_key = format!("{prefix}kind");
        let Some(kind_str) = kv.remove(&kind_key) else {
            break;
        };
        let kind = match kind_str.as_str() {
            "dense" => LayerKind::Dense,
            "fame_dense" => LayerKind::FameDense,
            "dropout_dense" => LayerKind::DropoutDense,
            other => return Err(Error::Config(format!("unknown layer kind '{other}'"))),
        };
        let out: usize = {
            let v = kv
                .remove(&format!("{prefix}out"))
                .ok_or_else(|| Error::Config(format!("missing '{prefix}out'")))?;
            parse!(v, format!("{prefix}out"))?
        };
        let factor: usize = match kv.remove(&format!("{prefix}factor")) {
            Some(v) => {
                if kind != LayerKind::FameDense {
                    return Err(Error::Config(format!(
                        "'{prefix}factor' is only valid for fame_dense layers"
                    )));
                }
                parse!(v, format!("{prefix}factor"))?
            }
            None => 0,
        };
        let noise = match kv.remove(&format!("{prefix}noise")) {
            Some(v) => parse_noise(&v)?,
            None => None,
        };
        match kind {
            LayerKind::Dense => {
                if noise.is_some() {
                    return Err(Error::Config(format!(
                        "layer {i}: dense layers take no noise"
                    )));
                }
            }
            LayerKind::FameDense | LayerKind::DropoutDense => {
                if noise.is_none() {
                    return Err(Error::Config(format!(
                        "layer {i}: {kind_str} requires a noise spec"
                    )));
                }
            }
        }
        let activation = parse_activation(
            &kv.remove(&format!("{prefix}activation"))
                .ok_or_else(|| Error::Config(format!("missing '{prefix}activation'")))?,
        )?;
        layers.push(LayerConfig { kind, out, factor, noise, activation });
    }

    if let Some(k) = kv.keys().next() {
        return Err(Error::Config(format!("unknown key '{k}'")));
    }

    let cfg = ExperimentConfig {
        seed,
        batch_size,
        epochs,
        total_updates,
        lr0,
        anneal,
        momentum0,
        momentum_final,
        momentum_ramp_epochs,
        max_norm,
        eval_every_epochs,
        checkpoint_every_epochs,
        n_samples,
        n_valid,
        input_dim,
        n_classes,
        input_noise,
        gcn,
        zca,
        zca_epsilon,
        sparsity_eval_examples,
        dataset,
        metrics_out,
        checkpoint_out,
        layers,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("at least one layer is required".into()));
        }
        if self.epochs == 0 && self.total_updates == 0 {
            return Err(Error::Config("set epochs or total_updates".into()));
        }
        if self.eval_every_epochs == 0 {
            return Err(Error::Config("eval_every_epochs must be >= 1".into()));
        }
        if self.max_norm < 0.0 {
            return Err(Error::Config("max_norm must be >= 0".into()));
        }
        if let Some(n) = self.input_noise {
            n.validate()?;
        }
        // Extent chain: input_dim -> layers -> n_classes.
        let mut prev = self.input_dim;
        for (i, l) in self.layers.iter().enumerate() {
            if l.out == 0 {
                return Err(Error::Config(format!("layer {i}: out must be >= 1")));
            }
            if l.kind == LayerKind::FameDense && l.factor > 0 && l.factor > l.out.max(prev) {
                return Err(Error::Config(format!(
                    "layer {i}: factor {} exceeds max(in, out)",
                    l.factor
                )));
            }
            prev = l.out;
        }
        if prev != self.n_classes {
            return Err(Error::Config(format!(
                "last layer emits {prev} values but n_classes={}",
                self.n_classes
            )));
        }
        Ok(())
    }

    /// Resolved factor width of layer `i`.
    pub fn factor_width(&self, i: usize) -> usize {
        let n_in = if i == 0 { self.input_dim } else { self.layers[i - 1].out };
        let l = &self.layers[i];
        if l.factor > 0 {
            l.factor
        } else {
            crate::layers::default_factor_width(l.out, n_in)
        }
    }

    /// Canonical text rendering: fixed key order, parseable by
    /// [`parse_config`], byte-identical for equal configs.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut push = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        push("seed", self.seed.to_string());
        push("batch_size", self.batch_size.to_string());
        push("epochs", self.epochs.to_string());
        push("total_updates", self.total_updates.to_string());
        push("lr0", self.lr0.to_string());
        push("anneal", self.anneal.to_string());
        push("momentum0", self.momentum0.to_string());
        push("momentum_final", self.momentum_final.to_string());
        push("momentum_ramp_epochs", self.momentum_ramp_epochs.to_string());
        push("max_norm", self.max_norm.to_string());
        push("eval_every_epochs", self.eval_every_epochs.to_string());
        push(
            "checkpoint_every_epochs",
            self.checkpoint_every_epochs.to_string(),
        );
        push("n_samples", self.n_samples.to_string());
        push("n_valid", self.n_valid.to_string());
        push("input_dim", self.input_dim.to_string());
        push("n_classes", self.n_classes.to_string());
        push("input_noise", noise_to_string(self.input_noise));
        push("gcn", self.gcn.to_string());
        push("zca", self.zca.to_string());
        push("zca_epsilon", self.zca_epsilon.to_string());
        push(
            "sparsity_eval_examples",
            self.sparsity_eval_examples.to_string(),
        );
        match &self.dataset {
            DatasetConfig::Mnist { train_images, train_labels, test_images, test_labels } => {
                push("dataset", "mnist".into());
                push("train_images", train_images.display().to_string());
                push("train_labels", train_labels.display().to_string());
                push("test_images", test_images.display().to_string());
                push("test_labels", test_labels.display().to_string());
            }
            DatasetConfig::Synthetic { kind, n_train, n_test } => {
                push("dataset", "synthetic".into());
                push(
                    "synthetic_kind",
                    match kind {
                        SyntheticKind::Blobs => "blobs",
                        SyntheticKind::Xor => "xor",
                        SyntheticKind::Linear => "linear",
                    }
                    .into(),
                );
                push("n_train", n_train.to_string());
                push("n_test", n_test.to_string());
            }
        }
        if let Some(p) = &self.metrics_out {
            push("metrics_out", p.display().to_string());
        }
        if let Some(p) = &self.checkpoint_out {
            push("checkpoint_out", p.display().to_string());
        }
        for (i, l) in self.layers.iter().enumerate() {
            push(
                &format!("layer.{i}.kind"),
                match l.kind {
                    LayerKind::Dense => "dense",
                    LayerKind::FameDense => "fame_dense",
                    LayerKind::DropoutDense => "dropout_dense",
                }
                .into(),
            );
            push(&format!("layer.{i}.out"), l.out.to_string());
            if l.kind == LayerKind::FameDense {
                push(&format!("layer.{i}.factor"), l.factor.to_string());
            }
            if let Some(n) = l.noise {
                push(&format!("layer.{i}.noise"), noise_to_string(Some(n)));
            }
            push(
                &format!("layer.{i}.activation"),
                activation_to_string(l.activation).into(),
            );
        }
        s
    }
}
