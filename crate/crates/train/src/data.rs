//! IDX image/label files.

use std::fs;
use std::path::Path;

use hadanet::{Scalar, Shape, Tensor};

use crate::error::{Result, TrainError};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Grayscale images stored as raw bytes, with labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| TrainError::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| TrainError::Truncated {
            path: path.into(),
            expected: at + 4,
            actual: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(TrainError::WrongMagic {
            path: path.into(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() < expected {
        return Err(TrainError::Truncated {
            path: path.into(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

/// Returns `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<(usize, usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = read(path)?;
    check_magic(&bytes, IMAGE_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let len = n * rows * cols;
    check_len(&bytes, 16 + len, path)?;
    Ok((n, rows, cols, bytes[16..16 + len].to_vec()))
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read(path)?;
    check_magic(&bytes, LABEL_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    check_len(&bytes, 8 + n, path)?;
    Ok(bytes[8..8 + n].to_vec())
}

pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let n = pixels.len() / (rows * cols).max(1);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| TrainError::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| TrainError::io(path, e))
}

/// Reads an image file and its label file.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (n, rows, cols, pixels) = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    if labels.len() != n {
        return Err(TrainError::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    Ok(Dataset {
        rows,
        cols,
        pixels,
        labels,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.image_len();
        &self.pixels[i * d..(i + 1) * d]
    }

    /// Pixel values of image `i` scaled to `[0, 1]`.
    pub fn image_values<S: Scalar>(&self, i: usize) -> Vec<S> {
        self.image(i).iter().map(|&p| S::lit(p as f64 / 255.0)).collect()
    }

    /// Keeps the first `per_class` images of every label, in file order.
    pub fn subset_per_class(&self, per_class: usize) -> Dataset {
        let mut seen = [0usize; 256];
        let mut out = Dataset {
            rows: self.rows,
            cols: self.cols,
            pixels: Vec::new(),
            labels: Vec::new(),
        };
        for i in 0..self.len() {
            let l = self.labels[i];
            if seen[l as usize] < per_class {
                seen[l as usize] += 1;
                out.labels.push(l);
                out.pixels.extend_from_slice(self.image(i));
            }
        }
        out
    }

    /// Keeps the first `n` images.
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..n * self.image_len()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// `1 + max label`, or 0 when empty.
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    /// `(n, rows, cols, 1)` batch of the given images, scaled to `[0, 1]`, and their labels.
    pub fn batch<S: Scalar>(&self, indices: &[usize]) -> Result<(Tensor<S>, Vec<usize>)> {
        let shape = Shape::new(indices.len(), self.rows, self.cols, 1)?;
        let mut data = Vec::with_capacity(shape.len());
        for &i in indices {
            data.extend(self.image_values::<S>(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i] as usize).collect();
        Ok((Tensor::new(shape, data)?, labels))
    }
}
