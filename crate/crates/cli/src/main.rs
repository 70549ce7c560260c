//! Command-line harness for factored-mean and dropout experiments.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fame_core::checkpoint::load_checkpoint;
use fame_core::config::{parse_config, ExperimentConfig};
use fame_core::data::{load_mnist_idx, Dataset, ImageShape};
use fame_core::error::{Error, Result};
use fame_core::gradcheck::{finite_difference_check, CheckLoss};
use fame_core::metrics::parse_csv;
use fame_core::network::{stream_ids, Network};
use fame_core::rng::RngState;
use fame_core::tensor::Tensor;
use fame_core::train::{averaging_analysis_csv, evaluate, train, train_resumed};

#[derive(Parser)]
#[command(
    name = "fame",
    about = "Train and analyze factored-mean (FaMe) and dropout networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a training experiment described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint to continue from; the config must be identical.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpointed model on an IDX image/label pair.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Sampled model-averaging analysis on the test data.
    Average {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override the test images embedded in the checkpoint config.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Override the test labels embedded in the checkpoint config.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Finite-difference gradient check of the configured architecture.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render SVG plots from a metrics or averaging CSV.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Test dataset for a checkpointed model: explicit IDX paths when given,
/// otherwise whatever the embedded config evaluated against.
fn eval_dataset(
    cfg: &ExperimentConfig,
    images: Option<&Path>,
    labels: Option<&Path>,
) -> Result<Dataset> {
    match (images, labels) {
        (Some(i), Some(l)) => load_mnist_idx(i, l, ImageShape::Flat),
        (None, None) => Ok(fame_core::train::load_data(cfg)?.eval),
        _ => Err(Error::Config(
            "--images and --labels must be given together".into(),
        )),
    }
}

fn cmd_train(config: &Path, resume: Option<&Path>) -> Result<()> {
    let cfg = read_config(config)?;
    let outcome = match resume {
        Some(ckpt) => train_resumed(&cfg, ckpt)?,
        None => train(&cfg)?,
    };
    println!(
        "trained {} updates over {} epochs: test error {:.4}, test cost {:.6}",
        outcome.updates_done,
        outcome.epochs_run,
        outcome.final_eval.error_rate,
        outcome.final_eval.mean_nll
    );
    println!(
        "effective parameters (collapsed test model): {}",
        outcome.network.effective_param_count()
    );
    if let Some(p) = &cfg.metrics_out {
        println!("metrics: {}", p.display());
    }
    if let Some(p) = &cfg.checkpoint_out {
        println!("checkpoint: {}", p.display());
    }
    Ok(())
}

fn cmd_eval(model: &Path, images: &Path, labels: &Path) -> Result<()> {
    let ck = load_checkpoint(model)?;
    let ds = load_mnist_idx(images, labels, ImageShape::Flat)?;
    let result = evaluate(&ck.network, &ds)?;
    println!(
        "test error {:.4} ({:.2}%), mean NLL {:.6}, {} examples",
        result.error_rate,
        100.0 * result.error_rate,
        result.mean_nll,
        ds.len()
    );
    println!(
        "effective parameters (collapsed test model): {}",
        ck.network.effective_param_count()
    );
    Ok(())
}

fn cmd_average(
    model: &Path,
    samples: usize,
    seed: u64,
    out: &Path,
    images: Option<&Path>,
    labels: Option<&Path>,
) -> Result<()> {
    let ck = load_checkpoint(model)?;
    let cfg = parse_config(&ck.config_text)?;
    let ds = eval_dataset(&cfg, images, labels)?;
    let csv = averaging_analysis_csv(&ck.network, &ds, samples, seed)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(out, &csv)?;
    println!(
        "averaging analysis over {} examples -> {}",
        ds.len(),
        out.display()
    );
    if let Some(last) = csv.lines().last() {
        println!("at max samples: {last}");
    }
    Ok(())
}

fn cmd_gradcheck(config: &Path) -> Result<()> {
    let cfg = read_config(config)?;
    let net: Network = fame_core::train::build_network(&cfg)?;
    let mut rng = RngState::new(cfg.seed).stream(stream_ids::GRADCHECK);
    let batch = 8usize;
    let x = Tensor::new(
        vec![batch, cfg.input_dim],
        (0..batch * cfg.input_dim).map(|_| rng.next_gaussian()).collect(),
    )?;
    let labels: Vec<usize> = (0..batch)
        .map(|_| (rng.next_u64() % cfg.n_classes as u64) as usize)
        .collect();
    // Full sweeps are infeasible for large nets; sample parameters per tensor.
    let report = finite_difference_check(
        &net,
        &x,
        CheckLoss::SoftmaxCe { labels: &labels },
        1e-5,
        cfg.seed,
        Some(64),
    )?;
    println!(
        "gradient check: max relative error {:.3e} over {} sampled parameters ({} skipped at ReLU kinks)",
        report.max_rel_error, report.checked, report.skipped
    );
    if report.max_rel_error < 1e-5 {
        println!("PASS (threshold 1e-5)");
        Ok(())
    } else {
        Err(Error::InvalidParam(format!(
            "gradient check failed: {:.3e} >= 1e-5",
            report.max_rel_error
        )))
    }
}

fn cmd_plot(metrics: &Path, out_dir: &Path) -> Result<()> {
    let text = std::fs::read_to_string(metrics)?;
    let (header, rows) = parse_csv(&text)?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    if header.iter().any(|h| h == "n_samples") {
        // Averaging analysis: NLL and error against sample count.
        let nll: Vec<plot::Series> = ["geo_nll", "arith_nll", "det_nll"]
            .iter()
            .filter_map(|c| plot::column_series(&header, &rows, "n_samples", c))
            .collect();
        let svg = plot::line_plot(
            "Mean predictors vs sample count",
            "subnetwork samples",
            "test NLL",
            &nll,
            true,
        );
        let p = out_dir.join("averaging_nll.svg");
        std::fs::write(&p, svg)?;
        written.push(p);

        let err: Vec<plot::Series> = ["geo_err", "arith_err", "det_err"]
            .iter()
            .filter_map(|c| plot::column_series(&header, &rows, "n_samples", c))
            .collect();
        let svg = plot::line_plot(
            "Mean predictors vs sample count",
            "subnetwork samples",
            "test error",
            &err,
            true,
        );
        let p = out_dir.join("averaging_error.svg");
        std::fs::write(&p, svg)?;
        written.push(p);
    } else {
        let costs: Vec<plot::Series> = ["train_cost", "test_cost"]
            .iter()
            .filter_map(|c| plot::column_series(&header, &rows, "update", c))
            .collect();
        let svg = plot::line_plot(
            "Training vs test cost",
            "weight updates",
            "cross-entropy cost",
            &costs,
            false,
        );
        let p = out_dir.join("costs.svg");
        std::fs::write(&p, svg)?;
        written.push(p);

        let norm_cols: Vec<String> = header
            .iter()
            .filter(|h| h.starts_with("rel_l2_"))
            .cloned()
            .collect();
        let norms: Vec<plot::Series> = norm_cols
            .iter()
            .filter_map(|c| plot::column_series(&header, &rows, "update", c))
            .collect();
        let svg = plot::line_plot(
            "Relative L2 norm of effective weights",
            "weight updates",
            "norm / norm at init",
            &norms,
            false,
        );
        let p = out_dir.join("relative_norms.svg");
        std::fs::write(&p, svg)?;
        written.push(p);

        let sp_cols: Vec<String> = header
            .iter()
            .filter(|h| h.starts_with("sparsity_"))
            .cloned()
            .collect();
        let sp: Vec<plot::Series> = sp_cols
            .iter()
            .filter_map(|c| plot::column_series(&header, &rows, "update", c))
            .collect();
        let svg = plot::line_plot(
            "Activation sparsity",
            "weight updates",
            "fraction of exact zeros",
            &sp,
            false,
        );
        let p = out_dir.join("sparsity.svg");
        std::fs::write(&p, svg)?;
        written.push(p);
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Train { config, resume } => cmd_train(&config, resume.as_deref()),
        Cmd::Eval { model, images, labels } => cmd_eval(&model, &images, &labels),
        Cmd::Average { model, samples, seed, out, images, labels } => {
            cmd_average(&model, samples, seed, &out, images.as_deref(), labels.as_deref())
        }
        Cmd::Gradcheck { config } => cmd_gradcheck(&config),
        Cmd::Plot { metrics, out } => cmd_plot(&metrics, &out),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
