//! IDX (MNIST / Fashion-MNIST) loading and deterministic batching.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
pub const CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Images kept as raw bytes; [`Dataset::pixel`] scales by 1/255.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pixels: Vec<u8>,
    labels: Vec<u8>,
    pub split: Split,
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(format!("{what}: header ends at byte {}", bytes.len())))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::BadMagic { found, expected });
    }
    Ok(())
}

/// Parses an IDX3 image file; returns the raw pixel bytes and the count.
pub fn parse_images(bytes: &[u8]) -> Result<(Vec<u8>, usize)> {
    check_magic(bytes, IMAGES_MAGIC, "images")?;
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    if rows != SIDE || cols != SIDE {
        return Err(Error::Format(format!(
            "images are {rows}x{cols}, expected {SIDE}x{SIDE}"
        )));
    }
    let body = &bytes[16..];
    let need = count * PIXELS;
    if body.len() < need {
        return Err(Error::TruncatedFile(format!(
            "images: {} of {need} pixel bytes present",
            body.len()
        )));
    }
    Ok((body[..need].to_vec(), count))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC, "labels")?;
    let count = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::TruncatedFile(format!(
            "labels: {} of {count} bytes present",
            body.len()
        )));
    }
    let labels = body[..count].to_vec();
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= CLASSES) {
        return Err(Error::Format(format!("label {bad} outside 0..{CLASSES}")));
    }
    Ok(labels)
}

impl Dataset {
    pub fn from_bytes(images: &[u8], labels: &[u8], split: Split) -> Result<Self> {
        let (pixels, count) = parse_images(images)?;
        let labels = parse_labels(labels)?;
        if labels.len() != count {
            return Err(Error::CountMismatch {
                images: count,
                labels: labels.len(),
            });
        }
        Ok(Dataset { pixels, labels, split })
    }

    pub fn from_raw(pixels: Vec<u8>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if pixels.len() != labels.len() * PIXELS {
            return Err(Error::CountMismatch {
                images: pixels.len() / PIXELS,
                labels: labels.len(),
            });
        }
        Ok(Dataset { pixels, labels, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }

    /// Pixel `(r, c)` of image `i` in `[0, 1]`.
    pub fn pixel(&self, i: usize, r: usize, c: usize) -> f64 {
        self.pixels[i * PIXELS + r * SIDE + c] as f64 / 255.0
    }

    /// Image `i` as 784 row-major values in `[0, 1]`.
    pub fn image(&self, i: usize) -> Vec<f64> {
        self.image_bytes(i).iter().map(|&p| p as f64 / 255.0).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut pixels = Vec::with_capacity(indices.len() * PIXELS);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(self.image_bytes(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            pixels,
            labels,
            split: self.split,
        }
    }

    /// The first `k` samples after a seeded shuffle.
    pub fn subset(&self, k: usize, seed: u64) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha12Rng::seed_from_u64(seed));
        idx.truncate(k.min(self.len()));
        self.select(&idx)
    }

    pub fn images_idx(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for word in [IMAGES_MAGIC, self.len() as u32, SIDE as u32, SIDE as u32] {
            out.extend_from_slice(&word.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn labels_idx(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }

    /// Shuffled index batches of exactly `batch` samples for one epoch; the
    /// short tail is dropped. Deterministic in `(seed, epoch)`.
    pub fn batches(&self, batch: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if batch == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng);
        Ok(idx.chunks_exact(batch).map(<[usize]>::to_vec).collect())
    }
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    Dataset::from_bytes(&images, &labels, split)
}

/// Loads the conventional four-file layout (`train-images-idx3-ubyte`, ...)
/// from a directory.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let d = dir.as_ref();
    let train = load_idx(
        d.join("train-images-idx3-ubyte"),
        d.join("train-labels-idx1-ubyte"),
        Split::Train,
    )?;
    let test = load_idx(
        d.join("t10k-images-idx3-ubyte"),
        d.join("t10k-labels-idx1-ubyte"),
        Split::Test,
    )?;
    Ok((train, test))
}
