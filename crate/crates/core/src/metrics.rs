//! Training-log records and their CSV serialization.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::averaging::AveragingRow;
use crate::error::{Error, Result};

/// One evaluation point of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub update: usize,
    pub epoch: usize,
    /// Mean noisy minibatch cost since the previous record.
    pub train_cost: f64,
    /// Deterministic-procedure cost on the evaluation set.
    pub test_cost: f64,
    pub test_error: f64,
    pub lr: f64,
    pub momentum: f64,
    /// Per-layer Frobenius norm of the effective weights over its value at
    /// initialization.
    pub rel_l2: Vec<f64>,
    /// Per-layer fraction of exactly-zero activations on a held-out batch.
    pub sparsity: Vec<f64>,
}

impl MetricsRecord {
    pub fn is_finite(&self) -> bool {
        [self.train_cost, self.test_cost, self.test_error, self.lr, self.momentum]
            .iter()
            .all(|v| v.is_finite())
            && self.rel_l2.iter().all(|v| v.is_finite())
            && self.sparsity.iter().all(|v| v.is_finite())
    }

    pub fn csv_header(n_layers: usize) -> String {
        let mut h = String::from("update,epoch,train_cost,test_cost,test_error,lr,momentum");
        for i in 0..n_layers {
            let _ = write!(h, ",rel_l2_{i}");
        }
        for i in 0..n_layers {
            let _ = write!(h, ",sparsity_{i}");
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let mut r = format!(
            "{},{},{},{},{},{},{}",
            self.update,
            self.epoch,
            self.train_cost,
            self.test_cost,
            self.test_error,
            self.lr,
            self.momentum
        );
        for v in &self.rel_l2 {
            let _ = write!(r, ",{v}");
        }
        for v in &self.sparsity {
            let _ = write!(r, ",{v}");
        }
        r
    }
}

/// Append-only CSV writer that enforces the log invariants: strictly
/// increasing update indices and no non-finite value ever written.
pub struct MetricsWriter {
    out: BufWriter<File>,
    n_layers: usize,
    last_update: Option<usize>,
}

impl MetricsWriter {
    /// Creates the file, writing `#`-prefixed header comments then the CSV
    /// header row.
    pub fn create(path: &Path, n_layers: usize, comments: &[String]) -> Result<Self> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut out = BufWriter::new(File::create(path)?);
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "{}", MetricsRecord::csv_header(n_layers))?;
        Ok(MetricsWriter { out, n_layers, last_update: None })
    }

    pub fn append(&mut self, rec: &MetricsRecord) -> Result<()> {
        if !rec.is_finite() {
            return Err(Error::NonFinite(format!(
                "metrics record at update {}: {rec:?}",
                rec.update
            )));
        }
        if rec.rel_l2.len() != self.n_layers || rec.sparsity.len() != self.n_layers {
            return Err(Error::ShapeMismatch(format!(
                "metrics record carries {} norm / {} sparsity entries for {} layers",
                rec.rel_l2.len(),
                rec.sparsity.len(),
                self.n_layers
            )));
        }
        if let Some(last) = self.last_update {
            if rec.update <= last {
                return Err(Error::InvalidParam(format!(
                    "update index {} not after {}",
                    rec.update, last
                )));
            }
        }
        writeln!(self.out, "{}", rec.csv_row())?;
        self.last_update = Some(rec.update);
        Ok(())
    }

    /// Records an abnormal termination as a trailing comment.
    pub fn abort(&mut self, reason: &str) -> Result<()> {
        writeln!(self.out, "# aborted: {reason}")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// CSV for the sampled-averaging analysis; the seven-column contract.
pub fn averaging_csv(rows: &[AveragingRow]) -> String {
    let mut s = String::from("n_samples,geo_nll,arith_nll,det_nll,geo_err,arith_err,det_err\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.n_samples, r.geo_nll, r.arith_nll, r.det_nll, r.geo_err, r.arith_err, r.det_err
        );
    }
    s
}

/// Parses a metrics or averaging CSV back into column names and numeric
/// rows, skipping `#` comments. Used by the plotting subcommand and tests.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))?
        .split(',')
        .map(|s| s.to_string())
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad CSV number '{v}'")))
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(Error::Format(format!(
                "row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
