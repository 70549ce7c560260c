//! The training harness: data loading, the minibatch loop (shuffle, noisy
//! forward, backprop, Nesterov step, max-norm projection, epoch-keyed
//! schedules), metrics emission and checkpointing.

use std::path::{Path, PathBuf};

use crate::averaging::{
    averaging_analysis, deterministic_test_predict, relative_l2_norms_from, sparsity_fraction,
};
use crate::backprop::backward_pass;
use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainState};
use crate::config::{DatasetConfig, ExperimentConfig, LayerKind};
use crate::data::{
    global_contrast_normalize, load_mnist_idx, make_synthetic, split_train_valid, zca_apply,
    zca_fit, Dataset, ImageShape,
};
use crate::error::{Error, Result};
use crate::layers::{DenseLayer, DropoutWrapper, FaMeDenseLayer};
use crate::loss::softmax_cross_entropy;
use crate::metrics::{averaging_csv, MetricsRecord, MetricsWriter};
use crate::network::{stream_ids, Network, NoiseStreams, StackLayer};
use crate::optim::{apply_max_norm, nesterov_step, OptimizerState};
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub error_rate: f64,
    pub mean_nll: f64,
}

/// Deterministic test-procedure evaluation of any model kind.
pub fn evaluate(net: &Network, ds: &Dataset) -> Result<EvalResult> {
    let est = deterministic_test_predict(net, &ds.inputs, &ds.labels)?;
    Ok(EvalResult { error_rate: est.error_rate, mean_nll: est.nll })
}

/// Training and evaluation splits as configured.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Dataset,
    pub eval: Dataset,
}

/// Loads, preprocesses and splits the configured dataset.
pub fn load_data(cfg: &ExperimentConfig) -> Result<TrainData> {
    let (mut train, mut eval) = match &cfg.dataset {
        DatasetConfig::Mnist { train_images, train_labels, test_images, test_labels } => (
            load_mnist_idx(train_images, train_labels, ImageShape::Flat)?,
            load_mnist_idx(test_images, test_labels, ImageShape::Flat)?,
        ),
        DatasetConfig::Synthetic { kind, n_train, n_test } => (
            make_synthetic(*kind, *n_train, cfg.seed)?,
            make_synthetic(*kind, *n_test, cfg.seed.wrapping_add(1))?,
        ),
    };
    if cfg.gcn {
        train.inputs = global_contrast_normalize(&train.inputs)?;
        eval.inputs = global_contrast_normalize(&eval.inputs)?;
    }
    if cfg.zca {
        let t = zca_fit(&train.inputs, cfg.zca_epsilon)?;
        train.inputs = zca_apply(&t, &train.inputs)?;
        eval.inputs = zca_apply(&t, &eval.inputs)?;
    }
    if cfg.n_valid > 0 {
        let (t, v) = split_train_valid(&train, cfg.n_valid, cfg.seed)?;
        train = t;
        eval = v;
    }
    if train.feature_count() != cfg.input_dim {
        return Err(Error::Config(format!(
            "dataset has {} features but input_dim={}",
            train.feature_count(),
            cfg.input_dim
        )));
    }
    if train.n_classes != cfg.n_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes but n_classes={}",
            train.n_classes, cfg.n_classes
        )));
    }
    Ok(TrainData { train, eval })
}

/// Builds the configured architecture with seeded initialization.
pub fn build_network(cfg: &ExperimentConfig) -> Result<Network> {
    let mut rng = RngState::new(cfg.seed).stream(stream_ids::INIT);
    let mut layers = Vec::with_capacity(cfg.layers.len());
    let mut n_in = cfg.input_dim;
    for (i, lc) in cfg.layers.iter().enumerate() {
        let layer = match lc.kind {
            LayerKind::Dense => {
                StackLayer::Dense(DenseLayer::init(lc.out, n_in, lc.activation, &mut rng))
            }
            LayerKind::FameDense => StackLayer::Fame(FaMeDenseLayer::init(
                lc.out,
                n_in,
                cfg.factor_width(i),
                lc.activation,
                lc.noise.expect("validated"),
                &mut rng,
            )?),
            LayerKind::DropoutDense => StackLayer::Dropout(DropoutWrapper::new(
                DenseLayer::init(lc.out, n_in, lc.activation, &mut rng),
                lc.noise.expect("validated"),
            )?),
        };
        layers.push(layer);
        n_in = lc.out;
    }
    Network::new(cfg.input_noise, layers)
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub network: Network,
    pub epochs_run: usize,
    pub updates_done: usize,
    pub final_eval: EvalResult,
    pub records: Vec<MetricsRecord>,
}

/// Full pipeline: load data, train, write metrics and checkpoints.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let data = load_data(cfg)?;
    run(cfg, &data, None)
}

/// Resumes from a checkpoint written by a run of the identical config.
pub fn train_resumed(cfg: &ExperimentConfig, checkpoint_path: &Path) -> Result<TrainOutcome> {
    let ck = load_checkpoint(checkpoint_path)?;
    if ck.config_text != cfg.to_text() {
        return Err(Error::Checkpoint(
            "checkpoint config does not match the supplied config".into(),
        ));
    }
    let data = load_data(cfg)?;
    run(cfg, &data, Some(ck))
}

fn sparsity_per_layer(net: &Network, eval: &Dataset, n: usize) -> Result<Vec<f64>> {
    let probe = eval.head(n.max(1))?;
    let test = net.to_test_network()?;
    let (_, acts) = test.forward_with_activations(&probe.inputs)?;
    Ok(acts.iter().map(sparsity_fraction).collect())
}

fn intermediate_checkpoint_path(base: &Path, epoch: usize) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("ckpt");
    base.with_file_name(format!("{stem}.e{epoch}.{ext}"))
}

/// The training loop itself, optionally resuming mid-run.
pub fn run(
    cfg: &ExperimentConfig,
    data: &TrainData,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n_train = data.train.len();
    let updates_per_epoch = n_train.div_ceil(cfg.batch_size);
    let total_updates = if cfg.total_updates > 0 {
        cfg.total_updates
    } else {
        cfg.epochs * updates_per_epoch
    };

    let (mut net, mut opt, mut streams, init_norms, mut epoch, mut updates_done) = match resume {
        None => {
            let net = build_network(cfg)?;
            let opt = OptimizerState::new(
                &net,
                cfg.lr0,
                cfg.anneal,
                cfg.momentum0,
                cfg.momentum_final,
                cfg.momentum_ramp_epochs,
            )?;
            let streams = NoiseStreams::new(cfg.seed, net.layers.len());
            let init_norms = net.effective_weight_norms()?;
            (net, opt, streams, init_norms, 0usize, 0usize)
        }
        Some(ck) => {
            let net = ck.network;
            let mut opt = OptimizerState::new(
                &net,
                cfg.lr0,
                cfg.anneal,
                cfg.momentum0,
                cfg.momentum_final,
                cfg.momentum_ramp_epochs,
            )?;
            if ck.velocities.len() != opt.velocity.len() {
                return Err(Error::Checkpoint(format!(
                    "{} velocity tensors, expected {}",
                    ck.velocities.len(),
                    opt.velocity.len()
                )));
            }
            opt.velocity = ck.velocities;
            opt.epoch = ck.state.epoch;
            if ck.state.noise_streams.layers.len() != net.layers.len() {
                return Err(Error::Checkpoint("noise stream count mismatch".into()));
            }
            (
                net,
                opt,
                ck.state.noise_streams,
                ck.state.init_norms,
                ck.state.epoch,
                ck.state.updates_done,
            )
        }
    };

    let mut writer = match &cfg.metrics_out {
        Some(path) => {
            let mut comments = vec![
                "fame training metrics v1".to_string(),
                format!("seed={}", cfg.seed),
            ];
            if let Some(s) = data.train.split_seed {
                comments.push(format!("split_seed={s} n_valid={}", cfg.n_valid));
            }
            comments.push(format!(
                "effective_parameters={}",
                net_for_counting(&net)
            ));
            Some(MetricsWriter::create(path, net.layers.len(), &comments)?)
        }
        None => None,
    };

    let mut records: Vec<MetricsRecord> = Vec::new();
    let mut train_cost_sum = 0.0;
    let mut train_cost_n = 0usize;
    let shuffle_root = RngState::new(cfg.seed).stream(stream_ids::SHUFFLE);

    let abort = |writer: &mut Option<MetricsWriter>, reason: String| -> Error {
        if let Some(w) = writer {
            let _ = w.abort(&reason);
        }
        Error::NonFinite(reason)
    };

    while updates_done < total_updates {
        let perm = shuffle_root.stream(epoch as u64).permutation(n_train);
        let start_batch = updates_done - epoch * updates_per_epoch;
        for chunk in perm.chunks(cfg.batch_size).skip(start_batch) {
            let xb = data.train.inputs.gather_rows(chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| data.train.labels[i]).collect();

            let saved = opt.apply_lookahead(&mut net);
            let fwd = net.forward_train(&xb, &mut streams);
            let (out, cache) = match fwd {
                Ok(v) => v,
                Err(e) => return Err(abort(&mut writer, format!("forward failed at update {updates_done}: {e}"))),
            };
            let (loss, d_logits) = match softmax_cross_entropy(&out, &labels) {
                Ok(v) => v,
                Err(e) => return Err(abort(&mut writer, format!("non-finite loss at update {updates_done}: {e}"))),
            };
            let grads = backward_pass(&net, &cache, &d_logits)?;
            if !grads.is_all_finite() {
                return Err(abort(
                    &mut writer,
                    format!("non-finite gradient at update {updates_done}"),
                ));
            }
            opt.restore(&mut net, saved);
            nesterov_step(&mut net, &grads, &mut opt)?;
            if cfg.max_norm > 0.0 {
                apply_max_norm(&mut net, cfg.max_norm)?;
            }
            train_cost_sum += loss.total;
            train_cost_n += 1;
            updates_done += 1;
            if updates_done >= total_updates {
                break;
            }
        }

        let finished_full_epoch = updates_done >= (epoch + 1) * updates_per_epoch;
        if finished_full_epoch {
            let sched_epoch = epoch;
            epoch += 1;
            if epoch % cfg.eval_every_epochs == 0 || updates_done >= total_updates {
                let eval = evaluate(&net, &data.eval)?;
                let rec = MetricsRecord {
                    update: updates_done,
                    epoch,
                    train_cost: train_cost_sum / train_cost_n.max(1) as f64,
                    test_cost: eval.mean_nll,
                    test_error: eval.error_rate,
                    lr: crate::optim::lr_at_epoch(cfg.lr0, cfg.anneal, sched_epoch),
                    momentum: crate::optim::momentum_at_epoch(
                        cfg.momentum0,
                        cfg.momentum_final,
                        cfg.momentum_ramp_epochs,
                        sched_epoch,
                    ),
                    rel_l2: relative_l2_norms_from(&net, &init_norms)?,
                    sparsity: sparsity_per_layer(&net, &data.eval, cfg.sparsity_eval_examples)?,
                };
                if let Some(w) = &mut writer {
                    w.append(&rec)?;
                }
                records.push(rec);
                train_cost_sum = 0.0;
                train_cost_n = 0;
            }
            opt.epoch = epoch;
            if cfg.checkpoint_every_epochs > 0
                && epoch % cfg.checkpoint_every_epochs == 0
                && updates_done < total_updates
            {
                if let Some(base) = &cfg.checkpoint_out {
                    let state = TrainState {
                        epoch,
                        updates_done,
                        init_norms: init_norms.clone(),
                        noise_streams: streams.clone(),
                    };
                    save_checkpoint(
                        &intermediate_checkpoint_path(base, epoch),
                        &cfg.to_text(),
                        &net,
                        &opt.velocity,
                        &state,
                    )?;
                }
            }
        }
    }

    let final_eval = evaluate(&net, &data.eval)?;
    if records.last().map(|r| r.update) != Some(updates_done) {
        // Budget ended mid-epoch: emit a final record at the stopping point.
        let rec = MetricsRecord {
            update: updates_done,
            epoch,
            train_cost: if train_cost_n > 0 {
                train_cost_sum / train_cost_n as f64
            } else {
                final_eval.mean_nll
            },
            test_cost: final_eval.mean_nll,
            test_error: final_eval.error_rate,
            lr: crate::optim::lr_at_epoch(cfg.lr0, cfg.anneal, epoch),
            momentum: crate::optim::momentum_at_epoch(
                cfg.momentum0,
                cfg.momentum_final,
                cfg.momentum_ramp_epochs,
                epoch,
            ),
            rel_l2: relative_l2_norms_from(&net, &init_norms)?,
            sparsity: sparsity_per_layer(&net, &data.eval, cfg.sparsity_eval_examples)?,
        };
        if let Some(w) = &mut writer {
            w.append(&rec)?;
        }
        records.push(rec);
    }
    if let Some(w) = &mut writer {
        w.flush()?;
    }

    if let Some(path) = &cfg.checkpoint_out {
        let state = TrainState {
            epoch,
            updates_done,
            init_norms: init_norms.clone(),
            noise_streams: streams.clone(),
        };
        save_checkpoint(path, &cfg.to_text(), &net, &opt.velocity, &state)?;
    }

    Ok(TrainOutcome {
        network: net,
        epochs_run: epoch,
        updates_done,
        final_eval,
        records,
    })
}

fn net_for_counting(net: &Network) -> usize {
    net.effective_param_count()
}

/// Standard sample-count grid for the averaging analysis, truncated to the
/// requested maximum (which is always included).
pub fn default_sample_counts(max: usize) -> Vec<usize> {
    let grid = [1usize, 2, 5, 10, 20, 50, 100, 200, 500, 1000];
    let mut counts: Vec<usize> = grid.iter().copied().filter(|&c| c < max).collect();
    counts.push(max);
    counts
}

/// Runs the sampled-averaging analysis and renders the CSV contract.
pub fn averaging_analysis_csv(
    net: &Network,
    ds: &Dataset,
    n_samples: usize,
    seed: u64,
) -> Result<String> {
    let counts = default_sample_counts(n_samples);
    let rows = averaging_analysis(net, &ds.inputs, &ds.labels, &counts, seed)?;
    Ok(averaging_csv(&rows))
}
