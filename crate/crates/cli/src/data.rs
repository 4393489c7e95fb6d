//! Labeled datasets: IDX ingestion and synthetic Gaussian blobs.

use std::path::Path;

use protolayer::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CliError, CliResult};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Samples of shape `[rows, cols, channels]` stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub shape: [usize; 3],
    pub values: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(shape: [usize; 3], values: Vec<f64>, labels: Vec<usize>) -> CliResult<Self> {
        let dim: usize = shape.iter().product();
        if dim == 0 || values.len() != dim * labels.len() {
            return Err(CliError::format(format!(
                "{} values for {} samples of shape {shape:?}",
                values.len(),
                labels.len()
            )));
        }
        Ok(Self { shape, values, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn sample(&self, i: usize) -> Tensor {
        Tensor::new(self.shape.to_vec(), self.row(i).to_vec()).expect("consistent shape")
    }

    /// All samples as a `len x dim` matrix.
    pub fn matrix(&self) -> Tensor {
        Tensor::matrix(self.len(), self.dim(), self.values.clone()).expect("consistent shape")
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            shape: self.shape,
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Seeded shuffle, then the first `test` samples go to the second part.
    pub fn split(&self, test: usize, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let test = test.min(idx.len());
        (self.subset(&idx[test..]), self.subset(&idx[..test]))
    }

    pub fn concat(&self, other: &Self) -> CliResult<Self> {
        if self.shape != other.shape {
            return Err(CliError::format("cannot concatenate datasets of different shapes"));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(self.shape, values, labels)
    }
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> CliResult<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| CliError::format(format!("truncated {what}: expected 4 bytes at byte offset {offset}")))
}

/// Parses an IDX file of unsigned bytes; returns `(dims, payload)`.
pub fn parse_idx(bytes: &[u8], expected_magic: u32) -> CliResult<(Vec<usize>, &[u8])> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != expected_magic {
        return Err(CliError::format(format!(
            "bad magic 0x{magic:08x} at byte offset 0, expected 0x{expected_magic:08x}"
        )));
    }
    let rank = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        dims.push(be_u32(bytes, 4 + 4 * i, "dimension size")? as usize);
    }
    let start = 4 + 4 * rank;
    let len: usize = dims.iter().product();
    let payload = bytes.get(start..start + len).ok_or_else(|| {
        CliError::format(format!(
            "truncated payload: {len} bytes expected from byte offset {start}, file has {}",
            bytes.len()
        ))
    })?;
    Ok((dims, payload))
}

pub fn encode_idx(magic: u32, dims: &[usize], payload: &[u8]) -> Vec<u8> {
    assert_eq!(dims.iter().product::<usize>(), payload.len(), "payload size");
    let mut out = magic.to_be_bytes().to_vec();
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

/// Writes images (`count x rows x cols` bytes) and labels as an IDX pair.
pub fn write_idx(images_path: &Path, labels_path: &Path, rows: usize, cols: usize, pixels: &[u8], labels: &[u8]) -> CliResult<()> {
    let images = encode_idx(IDX_IMAGES_MAGIC, &[labels.len(), rows, cols], pixels);
    std::fs::write(images_path, images).map_err(|e| CliError::io(images_path, e))?;
    let labels_bytes = encode_idx(IDX_LABELS_MAGIC, &[labels.len()], labels);
    std::fs::write(labels_path, labels_bytes).map_err(|e| CliError::io(labels_path, e))
}

/// Parses labels from IDX bytes.
pub fn parse_idx_labels(bytes: &[u8]) -> CliResult<Vec<usize>> {
    let (_, payload) = parse_idx(bytes, IDX_LABELS_MAGIC)?;
    Ok(payload.iter().map(|&b| b as usize).collect())
}

/// Loads an IDX image/label pair with pixels scaled to `[0, 1]`, shuffled
/// with `seed` and truncated to `limit` samples.
pub fn load_idx(images_path: &Path, labels_path: &Path, limit: Option<usize>, seed: u64) -> CliResult<Dataset> {
    let image_bytes = std::fs::read(images_path).map_err(|e| CliError::io(images_path, e))?;
    let label_bytes = std::fs::read(labels_path).map_err(|e| CliError::io(labels_path, e))?;
    let (dims, pixels) = parse_idx(&image_bytes, IDX_IMAGES_MAGIC)
        .map_err(|e| CliError::format(format!("{}: {}", images_path.display(), e.message)))?;
    let labels = parse_idx_labels(&label_bytes)
        .map_err(|e| CliError::format(format!("{}: {}", labels_path.display(), e.message)))?;
    if dims[0] != labels.len() {
        return Err(CliError::format(format!(
            "{} images but {} labels (count field at byte offset 4)",
            dims[0],
            labels.len()
        )));
    }
    let all = Dataset::new(
        [dims[1], dims[2], 1],
        pixels.iter().map(|&p| p as f64 / 255.0).collect(),
        labels,
    )?;
    let mut idx: Vec<usize> = (0..all.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if let Some(limit) = limit {
        idx.truncate(limit);
    }
    Ok(all.subset(&idx))
}

/// Gaussian blobs together with their class means.
#[derive(Debug, Clone, PartialEq)]
pub struct Blobs {
    pub data: Dataset,
    pub means: Vec<Vec<f64>>,
}

/// Isotropic Gaussian classes of scale `spread` around seeded means whose
/// pairwise distances are at least `8 · spread` (8 when `spread` is 0).
/// Samples are `[1, 1, dim]` vectors ordered class by class.
pub fn gen_blobs(n_classes: usize, n_per_class: usize, dim: usize, spread: f64, seed: u64) -> CliResult<Blobs> {
    if n_classes == 0 || n_per_class == 0 || dim == 0 || !(spread >= 0.0) {
        return Err(CliError::config("blobs need positive class count, size and dimension and spread ≥ 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let separation = 8.0 * if spread > 0.0 { spread } else { 1.0 };
    // Rejection-sample means in a box, growing it when it gets crowded.
    let mut side = separation * (n_classes as f64).powf(1.0 / dim as f64) * 2.0;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    let mut misses = 0;
    while means.len() < n_classes {
        let m: Vec<f64> = (0..dim).map(|_| rng.random_range(-side / 2.0..side / 2.0)).collect();
        let far = means.iter().all(|o| {
            o.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() >= separation * separation
        });
        if far {
            means.push(m);
        } else {
            misses += 1;
            if misses % 100 == 0 {
                side *= 1.5;
            }
        }
    }
    let mut values = Vec::with_capacity(n_classes * n_per_class * dim);
    let mut labels = Vec::with_capacity(n_classes * n_per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            for mu in mean {
                let z: f64 = rng.sample(StandardNormal);
                values.push(mu + spread * z);
            }
            labels.push(c);
        }
    }
    Ok(Blobs {
        data: Dataset::new([1, 1, dim], values, labels)?,
        means,
    })
}

/// `count` points at least `min_distance` from every mean, uniform in the
/// box around the means enlarged by `2 · min_distance`. Labeled 0.
pub fn gen_outliers(means: &[Vec<f64>], count: usize, min_distance: f64, seed: u64) -> CliResult<Dataset> {
    let dim = means.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(CliError::config("outliers need at least one mean"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo: Vec<f64> = (0..dim)
        .map(|j| means.iter().map(|m| m[j]).fold(f64::INFINITY, f64::min) - 2.0 * min_distance)
        .collect();
    let hi: Vec<f64> = (0..dim)
        .map(|j| means.iter().map(|m| m[j]).fold(f64::NEG_INFINITY, f64::max) + 2.0 * min_distance)
        .collect();
    let mut values = Vec::with_capacity(count * dim);
    let mut n = 0;
    while n < count {
        let p: Vec<f64> = (0..dim).map(|j| rng.random_range(lo[j]..hi[j])).collect();
        let clear = means.iter().all(|m| {
            m.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= min_distance
        });
        if clear {
            values.extend(p);
            n += 1;
        }
    }
    Dataset::new([1, 1, dim], values, vec![0; count])
}
