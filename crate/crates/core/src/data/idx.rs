//! IDX file parsing (the MNIST distribution format).
//!
//! Big-endian headers: magic 0x00000803 for u8 image tensors
//! (count, rows, cols), 0x00000801 for u8 label vectors. Pixels are scaled
//! to `[0, 1]`.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Dataset;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Layout of the loaded image tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageShape {
    /// `(n, rows*cols)`.
    Flat,
    /// `(n, 1, rows, cols)`.
    Planar,
}

fn read_u32_be(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format(format!("truncated file while reading {what}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Loads an MNIST-style image/label pair as a dataset with 10 classes.
pub fn load_mnist_idx(
    images_path: &Path,
    labels_path: &Path,
    shape: ImageShape,
) -> Result<Dataset> {
    let mut ir = BufReader::new(File::open(images_path)?);
    let magic = read_u32_be(&mut ir, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let n = read_u32_be(&mut ir, "image count")? as usize;
    let rows = read_u32_be(&mut ir, "image rows")? as usize;
    let cols = read_u32_be(&mut ir, "image cols")? as usize;
    let mut pixels = vec![0u8; n * rows * cols];
    ir.read_exact(&mut pixels)
        .map_err(|_| Error::Format("truncated image data".into()))?;
    if ir.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after image data".into()));
    }

    let mut lr = BufReader::new(File::open(labels_path)?);
    let magic = read_u32_be(&mut lr, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let n_labels = read_u32_be(&mut lr, "label count")? as usize;
    if n_labels != n {
        return Err(Error::Format(format!(
            "{n} images but {n_labels} labels"
        )));
    }
    let mut raw_labels = vec![0u8; n_labels];
    lr.read_exact(&mut raw_labels)
        .map_err(|_| Error::Format("truncated label data".into()))?;

    let data: Vec<f64> = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let inputs = match shape {
        ImageShape::Flat => Tensor::new(vec![n, rows * cols], data)?,
        ImageShape::Planar => Tensor::new(vec![n, 1, rows, cols], data)?,
    };
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    Dataset::new(inputs, labels, 10)
}

/// Writes `[0,1]`-scaled images back out in IDX layout (rounded to u8).
pub fn write_idx_images(path: &Path, images: &Tensor, rows: usize, cols: usize) -> Result<()> {
    let n = images.shape()[0];
    let per = images.len() / n;
    if per != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "{per} pixels per image vs {rows}x{cols}"
        )));
    }
    let mut f = File::create(path)?;
    f.write_all(&IMAGE_MAGIC.to_be_bytes())?;
    f.write_all(&(n as u32).to_be_bytes())?;
    f.write_all(&(rows as u32).to_be_bytes())?;
    f.write_all(&(cols as u32).to_be_bytes())?;
    let bytes: Vec<u8> = images
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    f.write_all(&bytes)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(&LABEL_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    let bytes: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    f.write_all(&bytes)?;
    Ok(())
}
