//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS] criterion N` line (visible with `--nocapture`).
//!
//! Criteria 7-10 train two desk-scale MNIST models (a factored-mean net and
//! a Gaussian-dropout baseline) once, shared through a `OnceLock`. They need
//! the four MNIST IDX files; set `FAME_MNIST_DIR` or place them in
//! `data/mnist/` at the workspace root.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use fame_core::activation::Activation;
use fame_core::averaging::{
    arithmetic_mean_predict, deterministic_test_predict, geometric_mean_predict,
    nll_standard_error, sample_subnetwork_predictions,
};
use fame_core::config::{parse_config, ExperimentConfig};
use fame_core::data::{load_mnist_idx, Dataset, ImageShape};
use fame_core::gradcheck::{
    finite_difference_check, finite_difference_check_conv, finite_difference_check_gated,
    CheckLoss,
};
use fame_core::layers::{DenseLayer, DropoutWrapper, FaMeConvLayer, FaMeDenseLayer, GatedLayer};
use fame_core::metrics::parse_csv;
use fame_core::network::{Network, ParamKind, StackLayer};
use fame_core::noise::NoiseSpec;
use fame_core::optim::{
    apply_max_norm, lr_at_epoch, momentum_at_epoch, nesterov_step, OptimizerState,
};
use fame_core::rng::RngState;
use fame_core::tensor::Tensor;
use fame_core::train::{load_data, run, train, TrainOutcome};

fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mnist_dir() -> PathBuf {
    match std::env::var_os("FAME_MNIST_DIR") {
        Some(d) => PathBuf::from(d),
        None => workspace_root().join("data/mnist"),
    }
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fame-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut RngState) -> Tensor {
    Tensor::new(
        vec![rows, cols],
        (0..rows * cols).map(|_| rng.next_gaussian()).collect(),
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// Desk-scale fixture shared by criteria 7-10.
// ---------------------------------------------------------------------------

struct DeskFixture {
    fame: TrainOutcome,
    dropout: TrainOutcome,
    test_set: Dataset,
    fame_seconds: f64,
    dropout_seconds: f64,
}

fn desk_config(kind: &str, metrics: &PathBuf, ckpt: &PathBuf) -> ExperimentConfig {
    let dir = mnist_dir();
    let layers = match kind {
        "fame" => "\
layer.0.kind=fame_dense
layer.0.out=256
layer.0.noise=gaussian:1:1
layer.0.activation=relu
layer.1.kind=fame_dense
layer.1.out=256
layer.1.noise=gaussian:1:1
layer.1.activation=relu
layer.2.kind=fame_dense
layer.2.out=10
layer.2.noise=gaussian:1:1
layer.2.activation=identity
",
        _ => "\
layer.0.kind=dense
layer.0.out=256
layer.0.activation=relu
layer.1.kind=dropout_dense
layer.1.out=256
layer.1.noise=gaussian:1:1
layer.1.activation=relu
layer.2.kind=dropout_dense
layer.2.out=10
layer.2.noise=gaussian:1:1
layer.2.activation=identity
",
    };
    let text = format!(
        "\
seed=42
batch_size=250
epochs=20
lr0=0.1
anneal=0.9
momentum0=0.5
momentum_final=0.9
momentum_ramp_epochs=8
max_norm=2.0
input_dim=784
n_classes=10
input_noise=gaussian:1:0.5
dataset=mnist
train_images={dir}/train-images-idx3-ubyte
train_labels={dir}/train-labels-idx1-ubyte
test_images={dir}/t10k-images-idx3-ubyte
test_labels={dir}/t10k-labels-idx1-ubyte
sparsity_eval_examples=1000
metrics_out={metrics}
checkpoint_out={ckpt}
{layers}",
        dir = dir.display(),
        metrics = metrics.display(),
        ckpt = ckpt.display(),
    );
    parse_config(&text).expect("desk config parses")
}

fn desk() -> &'static DeskFixture {
    static DESK: OnceLock<DeskFixture> = OnceLock::new();
    DESK.get_or_init(|| {
        let dir = mnist_dir();
        assert!(
            dir.join("train-images-idx3-ubyte").exists(),
            "MNIST IDX files not found in {} (set FAME_MNIST_DIR); \
             criteria 7-10 train on the real dataset",
            dir.display()
        );
        let fame_cfg = desk_config("fame", &tmp("desk-fame.csv"), &tmp("desk-fame.ckpt"));
        let drop_cfg = desk_config("dropout", &tmp("desk-drop.csv"), &tmp("desk-drop.ckpt"));

        let t = Instant::now();
        let fame = train(&fame_cfg).expect("desk fame run");
        let fame_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let dropout = train(&drop_cfg).expect("desk dropout run");
        let dropout_seconds = t.elapsed().as_secs_f64();

        let test_set = load_mnist_idx(
            &dir.join("t10k-images-idx3-ubyte"),
            &dir.join("t10k-labels-idx1-ubyte"),
            ImageShape::Flat,
        )
        .expect("test set");
        DeskFixture { fame, dropout, test_set, fame_seconds, dropout_seconds }
    })
}

// ---------------------------------------------------------------------------
// 1. Collapse equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_collapse_equivalence() {
    let start = Instant::now();
    let mut rng = RngState::new(1001);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let n_layers = 2 + (trial % 2);
        let mut dims = vec![1 + (rng.next_u64() % 64) as usize];
        for _ in 0..n_layers {
            dims.push(1 + (rng.next_u64() % 64) as usize);
        }
        let mut layers = Vec::new();
        for l in 0..n_layers {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let f = 1 + (rng.next_u64() % n_in.min(n_out) as u64) as usize;
            let act = if l + 1 == n_layers { Activation::Identity } else { Activation::Relu };
            layers.push(StackLayer::Fame(
                FaMeDenseLayer::init(
                    n_out,
                    n_in,
                    f,
                    act,
                    NoiseSpec::Gaussian { mean: 1.0, std: 1.0 },
                    &mut rng,
                )
                .unwrap(),
            ));
        }
        let net = Network::new(None, layers).unwrap();
        let x = random_matrix(5, dims[0], &mut rng);
        let unit = net.forward_train_unit_noise(&x).unwrap();
        let test = net.to_test_network().unwrap().forward(&x).unwrap();
        worst = worst.max(unit.max_abs_diff(&test).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(worst < 1e-12, "max abs diff {worst}");
    assert!(secs < 5.0, "took {secs:.2}s");
    println!("[PASS] criterion 1: collapse equivalence, max abs diff {worst:.3e} ({secs:.2}s)");
}

// ---------------------------------------------------------------------------
// 2. Gated equivalence
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_gated_equivalence() {
    let start = Instant::now();
    let mut rng = RngState::new(1002);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let f = 1 + (rng.next_u64() % 8) as usize;
        let n_x = 1 + (rng.next_u64() % 8) as usize;
        let n_z = 1 + (rng.next_u64() % 8) as usize;
        let n_h = 1 + (rng.next_u64() % 8) as usize;
        let layer = GatedLayer::init(f, n_x, n_z, n_h, Activation::Relu, &mut rng).unwrap();
        let z = Tensor::from_vec((0..n_z).map(|_| rng.next_gaussian()).collect());
        let x = Tensor::from_vec((0..n_x).map(|_| rng.next_gaussian()).collect());
        let gated = layer.forward(&x, &z).unwrap();
        let collapsed = layer.fixed_context_collapse(&z).unwrap().forward(&x).unwrap();
        worst = worst.max(gated.max_abs_diff(&collapsed).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(worst < 1e-10, "max abs diff {worst}");
    assert!(secs < 5.0, "took {secs:.2}s");
    println!("[PASS] criterion 2: gated equivalence, max abs diff {worst:.3e} ({secs:.2}s)");
}

// ---------------------------------------------------------------------------
// 3. Convolution collapse
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_conv_collapse() {
    let start = Instant::now();
    let mut rng = RngState::new(1003);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let f = 1 + (rng.next_u64() % 6) as usize;
        let c_out = 1 + (rng.next_u64() % 4) as usize;
        let k = 1 + (rng.next_u64() % 3) as usize;
        let layer = FaMeConvLayer::init(
            c_out,
            3,
            f,
            k,
            k,
            Activation::Relu,
            NoiseSpec::Gaussian { mean: 1.0, std: 1.0 },
            &mut rng,
        )
        .unwrap();
        let image = Tensor::new(
            vec![3, 8, 8],
            (0..192).map(|_| rng.next_gaussian()).collect(),
        )
        .unwrap();
        let ones = Tensor::filled(vec![1, f], 1.0).unwrap();
        let (two_stage, _) = layer.forward_train_with_noise(&image, &ones).unwrap();
        let collapsed = layer.forward_test(&image).unwrap();
        worst = worst.max(two_stage.max_abs_diff(&collapsed).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(worst < 1e-10, "max abs diff {worst}");
    assert!(secs < 5.0, "took {secs:.2}s");
    println!("[PASS] criterion 3: conv collapse, max abs diff {worst:.3e} ({secs:.2}s)");
}

// ---------------------------------------------------------------------------
// 4. Gradient correctness for every layer kind
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_gradient_correctness() {
    let start = Instant::now();
    let mut rng = RngState::new(1004);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut total_checked = 0usize;

    let mut dims = |rng: &mut RngState| 2 + (rng.next_u64() % 4) as usize;

    for i in 0..20 {
        // Dense stack.
        let (n_in, n_h, n_out) = (dims(&mut rng), dims(&mut rng), dims(&mut rng));
        let net = Network::new(
            None,
            vec![
                StackLayer::Dense(DenseLayer::init(n_h, n_in, Activation::Relu, &mut rng)),
                StackLayer::Dense(DenseLayer::init(n_out, n_h, Activation::Identity, &mut rng)),
            ],
        )
        .unwrap();
        let x = random_matrix(3, n_in, &mut rng);
        let labels: Vec<usize> = (0..3).map(|j| (i + j) % n_out).collect();
        let r = finite_difference_check(
            &net,
            &x,
            CheckLoss::SoftmaxCe { labels: &labels },
            eps,
            i as u64,
            None,
        )
        .unwrap();
        worst = worst.max(r.max_rel_error);
        total_checked += r.checked;

        // Factored-mean stack with input noise.
        let (n_in, n_h, n_out) = (dims(&mut rng), dims(&mut rng), dims(&mut rng));
        let noise = NoiseSpec::Gaussian { mean: 1.0, std: 1.0 };
        let net = Network::new(
            Some(NoiseSpec::Gaussian { mean: 1.0, std: 0.5 }),
            vec![
                StackLayer::Fame(
                    FaMeDenseLayer::init(n_h, n_in, n_h.min(n_in), Activation::Relu, noise, &mut rng)
                        .unwrap(),
                ),
                StackLayer::Fame(
                    FaMeDenseLayer::init(n_out, n_h, 2, Activation::Identity, noise, &mut rng)
                        .unwrap(),
                ),
            ],
        )
        .unwrap();
        let x = random_matrix(3, n_in, &mut rng);
        let labels: Vec<usize> = (0..3).map(|j| (i + j) % n_out).collect();
        let r = finite_difference_check(
            &net,
            &x,
            CheckLoss::SoftmaxCe { labels: &labels },
            eps,
            100 + i as u64,
            None,
        )
        .unwrap();
        worst = worst.max(r.max_rel_error);
        total_checked += r.checked;

        // Dropout-wrapped stack (Bernoulli masks held fixed by the seed).
        let (n_in, n_h, n_out) = (dims(&mut rng), dims(&mut rng), dims(&mut rng));
        let net = Network::new(
            None,
            vec![
                StackLayer::Dropout(
                    DropoutWrapper::new(
                        DenseLayer::init(n_h, n_in, Activation::Relu, &mut rng),
                        NoiseSpec::Bernoulli { p: 0.7 },
                    )
                    .unwrap(),
                ),
                StackLayer::Dropout(
                    DropoutWrapper::new(
                        DenseLayer::init(n_out, n_h, Activation::Identity, &mut rng),
                        NoiseSpec::Gaussian { mean: 1.0, std: 1.0 },
                    )
                    .unwrap(),
                ),
            ],
        )
        .unwrap();
        let x = random_matrix(3, n_in, &mut rng);
        let labels: Vec<usize> = (0..3).map(|j| (i + j) % n_out).collect();
        let r = finite_difference_check(
            &net,
            &x,
            CheckLoss::SoftmaxCe { labels: &labels },
            eps,
            200 + i as u64,
            None,
        )
        .unwrap();
        worst = worst.max(r.max_rel_error);
        total_checked += r.checked;

        // Gated fixture.
        let (f, n_x, n_z, n_h) = (dims(&mut rng), dims(&mut rng), dims(&mut rng), dims(&mut rng));
        let layer = GatedLayer::init(f, n_x, n_z, n_h, Activation::Relu, &mut rng).unwrap();
        let x = random_matrix(3, n_x, &mut rng);
        let z = random_matrix(3, n_z, &mut rng);
        let targets = random_matrix(3, n_h, &mut rng);
        let r = finite_difference_check_gated(&layer, &x, &z, &targets, eps).unwrap();
        worst = worst.max(r.max_rel_error);
        total_checked += r.checked;

        // Factored convolution fixture.
        let f = 1 + (rng.next_u64() % 3) as usize;
        let c_out = 1 + (rng.next_u64() % 2) as usize;
        let layer = FaMeConvLayer::init(
            c_out,
            2,
            f,
            2,
            2,
            Activation::Relu,
            NoiseSpec::Gaussian { mean: 1.0, std: 1.0 },
            &mut rng,
        )
        .unwrap();
        let image = Tensor::new(
            vec![2, 2, 4, 4],
            (0..64).map(|_| rng.next_gaussian()).collect(),
        )
        .unwrap();
        let targets = Tensor::new(
            vec![2, c_out, 3, 3],
            (0..2 * c_out * 9).map(|_| rng.next_gaussian()).collect(),
        )
        .unwrap();
        let r =
            finite_difference_check_conv(&layer, &image, &targets, eps, 300 + i as u64).unwrap();
        worst = worst.max(r.max_rel_error);
        total_checked += r.checked;
    }

    let secs = start.elapsed().as_secs_f64();
    assert!(worst < 1e-5, "max relative error {worst}");
    assert!(secs < 60.0, "took {secs:.2}s");
    println!(
        "[PASS] criterion 4: gradients of all 5 layer kinds, max rel err {worst:.3e} over {total_checked} parameters ({secs:.2}s)"
    );
}

// ---------------------------------------------------------------------------
// 5. Optimizer contract
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_optimizer_contract() {
    // Scalar Nesterov recurrence against an independent hand recurrence.
    let (lr, mu) = (0.1, 0.9);
    let mut net = Network::new(
        None,
        vec![StackLayer::Dense(
            DenseLayer::new(
                Tensor::new(vec![1, 1], vec![1.0]).unwrap(),
                Tensor::zeros(vec![1]).unwrap(),
                Activation::Identity,
            )
            .unwrap(),
        )],
    )
    .unwrap();
    let mut state = OptimizerState::new(&net, lr, 1.0, mu, mu, 1).unwrap();
    let (mut theta, mut v) = (1.0f64, 0.0f64);
    for t in 0..100 {
        let g = (t as f64 * 0.37).sin();
        let mut grads = fame_core::backprop::GradientSet::zeros_like(&net);
        grads.tensors[0].data_mut()[0] = g;
        nesterov_step(&mut net, &grads, &mut state).unwrap();
        v = mu * v - lr * g;
        theta += v;
        let got = match &net.layers[0] {
            StackLayer::Dense(l) => l.weights.data()[0],
            _ => unreachable!(),
        };
        assert!((got - theta).abs() < 1e-12, "step {t}: {got} vs {theta}");
    }

    // Schedules match their closed forms.
    for e in 0..200 {
        assert_eq!(lr_at_epoch(0.1, 0.995, e), 0.1 * 0.995f64.powi(e as i32));
        let expected = (0.5 + (0.9 - 0.5) * e as f64 / 20.0).min(0.9);
        assert_eq!(momentum_at_epoch(0.5, 0.9, 20, e), expected);
    }

    // Row norms bounded after every update of a 5-epoch toy run.
    let cfg = parse_config(
        "\
seed=11
batch_size=16
epochs=5
lr0=0.5
anneal=0.995
momentum0=0.5
momentum_final=0.9
momentum_ramp_epochs=5
max_norm=2.0
input_dim=2
n_classes=2
dataset=synthetic
synthetic_kind=xor
n_train=64
n_test=32
layer.0.kind=fame_dense
layer.0.out=8
layer.0.noise=gaussian:1:1
layer.0.activation=relu
layer.1.kind=dense
layer.1.out=2
layer.1.activation=identity
",
    )
    .unwrap();
    let data = load_data(&cfg).unwrap();
    let mut net = fame_core::train::build_network(&cfg).unwrap();
    let mut opt = OptimizerState::new(&net, cfg.lr0, cfg.anneal, 0.5, 0.9, 5).unwrap();
    let mut streams = fame_core::network::NoiseStreams::new(cfg.seed, net.layers.len());
    let shuffle = RngState::new(cfg.seed).stream(fame_core::network::stream_ids::SHUFFLE);
    for epoch in 0..5u64 {
        let perm = shuffle.stream(epoch).permutation(data.train.len());
        for chunk in perm.chunks(cfg.batch_size) {
            let xb = data.train.inputs.gather_rows(chunk).unwrap();
            let labels: Vec<usize> = chunk.iter().map(|&i| data.train.labels[i]).collect();
            let saved = opt.apply_lookahead(&mut net);
            let (out, cache) = net.forward_train(&xb, &mut streams).unwrap();
            let (_, d) = fame_core::loss::softmax_cross_entropy(&out, &labels).unwrap();
            let grads = fame_core::backprop::backward_pass(&net, &cache, &d).unwrap();
            opt.restore(&mut net, saved);
            nesterov_step(&mut net, &grads, &mut opt).unwrap();
            apply_max_norm(&mut net, 2.0).unwrap();
            net.visit_params(&mut |t, kind| {
                if kind == ParamKind::Weight {
                    let (rows, cols) = t.dims2("w").unwrap();
                    for r in 0..rows {
                        let norm: f64 = t.data()[r * cols..(r + 1) * cols]
                            .iter()
                            .map(|x| x * x)
                            .sum::<f64>()
                            .sqrt();
                        assert!(norm <= 2.0 + 1e-9, "row norm {norm}");
                    }
                }
            });
        }
        opt.epoch += 1;
    }
    println!("[PASS] criterion 5: optimizer recurrence, schedules and max-norm contract");
}

// ---------------------------------------------------------------------------
// 6. Dropout test-time scaling
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_dropout_test_scaling() {
    let mut rng = RngState::new(1006);
    let dense = DenseLayer::init(4, 6, Activation::Identity, &mut rng);
    let x = Tensor::from_vec((0..6).map(|_| rng.next_gaussian()).collect());

    // Bernoulli: Monte-Carlo mean of noisy pre-activations vs p-scaled
    // deterministic pre-activation, within 5 standard errors per unit.
    let p = 0.6;
    let wrapper = DropoutWrapper::new(dense.clone(), NoiseSpec::Bernoulli { p }).unwrap();
    let expected = wrapper.to_test_layer().forward(&x).unwrap();
    let n = 100_000;
    let mut sums = vec![0.0; 4];
    let mut sq = vec![0.0; 4];
    for _ in 0..n {
        let (out, _) = wrapper.forward_train(&x, &mut rng).unwrap();
        for (k, &v) in out.data().iter().enumerate() {
            sums[k] += v;
            sq[k] += v * v;
        }
    }
    for k in 0..4 {
        let mean = sums[k] / n as f64;
        let var = sq[k] / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt().max(1e-12);
        let diff = (mean - expected.data()[k]).abs();
        assert!(diff < 5.0 * se, "unit {k}: diff {diff}, se {se}");
    }

    // Gaussian mean-1 noise: the deterministic model IS the noise-free model.
    let wrapper =
        DropoutWrapper::new(dense.clone(), NoiseSpec::Gaussian { mean: 1.0, std: 0.7 }).unwrap();
    let test_layer = wrapper.to_test_layer();
    assert_eq!(test_layer.weights, dense.weights);
    assert_eq!(test_layer.forward(&x).unwrap(), dense.forward(&x).unwrap());

    println!("[PASS] criterion 6: dropout expectation scaling (Bernoulli MC + Gaussian exact)");
}

// ---------------------------------------------------------------------------
// 7. Desk-scale MNIST error targets
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_desk_scale_mnist() {
    let d = desk();
    let fame_err = d.fame.final_eval.error_rate;
    let drop_err = d.dropout.final_eval.error_rate;
    assert!(
        fame_err <= 0.025,
        "factored-mean desk error {fame_err} exceeds 2.5%"
    );
    assert!(
        drop_err <= 0.030,
        "gaussian-dropout desk error {drop_err} exceeds 3.0%"
    );
    println!(
        "[PASS] criterion 7: desk MNIST, fame {:.2}% ({:.0}s), dropout {:.2}% ({:.0}s); runtime target <15min/core",
        100.0 * fame_err,
        d.fame_seconds,
        100.0 * drop_err,
        d.dropout_seconds
    );
}

// ---------------------------------------------------------------------------
// 8. Sampled geometric mean vs deterministic test procedure
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_geometric_mean_property() {
    let d = desk();
    // First 1000 test examples keep the thousand-sample sweep tractable.
    let subset = d.test_set.head(1000).unwrap();
    let samples =
        sample_subnetwork_predictions(&d.fame.network, &subset.inputs, 1000, 20250).unwrap();
    let geo = geometric_mean_predict(&samples, &subset.labels).unwrap();
    let arith = arithmetic_mean_predict(&samples, &subset.labels).unwrap();
    let det = deterministic_test_predict(&d.fame.network, &subset.inputs, &subset.labels).unwrap();

    let se_geo = nll_standard_error(&geo.probs, &subset.labels).unwrap();
    let se_det = nll_standard_error(&det.probs, &subset.labels).unwrap();
    let pooled = (se_geo * se_geo + se_det * se_det).sqrt();
    let gap = (det.nll - geo.nll).abs();
    assert!(
        gap < 3.0 * pooled,
        "det nll {} vs geo nll {}: gap {gap} exceeds 3 pooled SE {pooled}",
        det.nll,
        geo.nll
    );

    // CSV contract: all seven columns at counts up to 1000.
    let csv =
        fame_core::train::averaging_analysis_csv(&d.fame.network, &subset, 1000, 20250).unwrap();
    let (header, rows) = parse_csv(&csv).unwrap();
    assert_eq!(
        header,
        vec!["n_samples", "geo_nll", "arith_nll", "det_nll", "geo_err", "arith_err", "det_err"]
    );
    assert_eq!(rows.last().unwrap()[0], 1000.0);
    assert_eq!(rows.len(), 10);

    println!(
        "[PASS] criterion 8: det nll {:.4} within 3*{:.4} of geo nll {:.4} (arith {:.4}); 7-column CSV to n=1000",
        det.nll, pooled, geo.nll, arith.nll
    );
}

// ---------------------------------------------------------------------------
// 9. Cost curves and relative-norm monitoring
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_cost_and_norm_monitoring() {
    let d = desk();
    let records = &d.fame.records;
    assert_eq!(records.len(), 20, "one record per epoch");
    for r in records {
        assert!(r.is_finite());
        assert_eq!(r.rel_l2.len(), 3);
        assert_eq!(r.sparsity.len(), 3);
    }
    // No-overfitting trend: test cost does not rise across the last quarter.
    let q = records.len() - records.len() / 4;
    let start_cost = records[q - 1].test_cost;
    let end_cost = records.last().unwrap().test_cost;
    assert!(
        end_cost <= start_cost,
        "test cost rose over the last quarter: {start_cost} -> {end_cost}"
    );
    println!(
        "[PASS] criterion 9: per-epoch cost/norm curves emitted; test cost {:.4} -> {:.4} over last quarter; final rel norms {:?}",
        start_cost,
        end_cost,
        records.last().unwrap().rel_l2
    );
}

// ---------------------------------------------------------------------------
// 10. Sparsity monitor
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_sparsity_monitor() {
    let d = desk();
    let last = d.dropout.records.last().unwrap();
    // Hidden ReLU layers of the dropout baseline.
    for (i, &s) in last.sparsity[..2].iter().enumerate() {
        assert!(
            (0.2..=0.95).contains(&s),
            "hidden layer {i} sparsity {s} outside [0.2, 0.95]"
        );
    }
    println!(
        "[PASS] criterion 10: dropout hidden-layer sparsity {:?} within [0.2, 0.95]",
        &last.sparsity[..2]
    );
}

// ---------------------------------------------------------------------------
// 11. Infrastructure invariants
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_infrastructure_invariants() {
    // IDX: round-trip and bad-magic rejection.
    let ip = tmp("c11-images");
    let lp = tmp("c11-labels");
    let images = Tensor::new(
        vec![4, 9],
        (0..36).map(|i| ((i * 7) % 256) as f64 / 255.0).collect(),
    )
    .unwrap();
    fame_core::data::write_idx_images(&ip, &images, 3, 3).unwrap();
    fame_core::data::write_idx_labels(&lp, &[1, 2, 3, 4]).unwrap();
    let ds = load_mnist_idx(&ip, &lp, ImageShape::Flat).unwrap();
    assert_eq!(ds.inputs, images);
    let mut corrupt = std::fs::read(&ip).unwrap();
    corrupt[0] ^= 0xff;
    std::fs::write(&ip, corrupt).unwrap();
    assert!(load_mnist_idx(&ip, &lp, ImageShape::Flat).is_err());

    // Checkpoint round-trip, resume equality, metrics determinism: a short
    // noisy toy run exercised twice plus once from its midpoint checkpoint.
    let mk_cfg = |metrics: &PathBuf, ckpt: &PathBuf| {
        parse_config(&format!(
            "\
seed=33
batch_size=16
epochs=4
lr0=0.1
anneal=0.995
momentum0=0.5
momentum_final=0.9
momentum_ramp_epochs=4
max_norm=2.0
input_dim=2
n_classes=2
input_noise=gaussian:1:0.5
dataset=synthetic
synthetic_kind=xor
n_train=64
n_test=32
sparsity_eval_examples=32
checkpoint_every_epochs=2
metrics_out={}
checkpoint_out={}
layer.0.kind=fame_dense
layer.0.out=8
layer.0.noise=gaussian:1:1
layer.0.activation=relu
layer.1.kind=fame_dense
layer.1.out=2
layer.1.noise=gaussian:1:1
layer.1.activation=identity
",
            metrics.display(),
            ckpt.display()
        ))
        .unwrap()
    };
    let m1 = tmp("c11-a.csv");
    let c1 = tmp("c11-a.ckpt");
    let cfg = mk_cfg(&m1, &c1);
    let full = train(&cfg).unwrap();

    // Identical config and seed: byte-identical metrics.
    let data = load_data(&cfg).unwrap();
    let m2 = tmp("c11-b.csv");
    let c2 = tmp("c11-b.ckpt");
    let cfg_b = mk_cfg(&m2, &c2);
    run(&cfg_b, &data, None).unwrap();
    // Metrics bodies must agree line for line (headers too: no paths inside).
    assert_eq!(
        std::fs::read_to_string(&m1).unwrap(),
        std::fs::read_to_string(&m2).unwrap()
    );

    // Checkpoint round-trip is bit-exact.
    let ck = fame_core::checkpoint::load_checkpoint(&c1).unwrap();
    let resaved = tmp("c11-resave.ckpt");
    fame_core::checkpoint::save_checkpoint(
        &resaved,
        &ck.config_text,
        &ck.network,
        &ck.velocities,
        &ck.state,
    )
    .unwrap();
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&resaved).unwrap());

    // Resume from the epoch-2 intermediate reproduces the full run.
    let mid = tmp("c11-a.e2.ckpt");
    assert!(mid.exists());
    let resumed = fame_core::train::train_resumed(&cfg, &mid).unwrap();
    assert_eq!(resumed.network, full.network);
    let tail: Vec<_> = full.records.iter().filter(|r| r.epoch > 2).cloned().collect();
    assert_eq!(resumed.records, tail);

    println!("[PASS] criterion 11: IDX round-trip/rejection, checkpoint round-trip, exact resume, byte-identical metrics");
}
