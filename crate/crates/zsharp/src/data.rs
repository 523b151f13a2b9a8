//! Deterministic desk-scale data: synthetic 2-D classification
//! generators, an IDX image/label loader, seeded splits and minibatching,
//! and CSV export.

use crate::math::{stable_floor, SeededRng};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("not an IDX file")]
    NotIdx,
    #[error("image/label count mismatch")]
    CountMismatch,
    #[error("unexpected EOF")]
    UnexpectedEof,
    #[error("invalid dataset parameter: {detail}")]
    InvalidParam { detail: String },
    #[error("dataset is malformed: {detail}")]
    Malformed { detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Read-only view over labeled feature rows. Implemented by both
/// [`Dataset`] and [`Batch`] so model code can take either.
pub trait Samples {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn feature_dim(&self) -> usize;
    fn features(&self, i: usize) -> &[f64];
    fn label(&self, i: usize) -> usize;
}

/// Immutable labeled dataset with row-major features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n: usize,
    m: usize,
    n_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        m: usize,
        n_classes: usize,
    ) -> Result<Self, DataError> {
        let n = labels.len();
        if n == 0 {
            return Err(DataError::Malformed {
                detail: "no samples".into(),
            });
        }
        if m == 0 || features.len() != n * m {
            return Err(DataError::Malformed {
                detail: format!(
                    "{} feature values for {n} rows of width {m}",
                    features.len()
                ),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(DataError::Malformed {
                detail: format!("label {bad} >= n_classes {n_classes}"),
            });
        }
        Ok(Self {
            features,
            labels,
            n,
            m,
            n_classes,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn take_rows(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.m);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            n: indices.len(),
            m: self.m,
            n_classes: self.n_classes,
        }
    }

    /// CSV export: header row `x0,...,x{m-1},label`, one sample per line,
    /// label in the last column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for j in 0..self.m {
            write!(out, "x{j},")?;
        }
        writeln!(out, "label")?;
        for i in 0..self.n {
            for &v in self.features(i) {
                write!(out, "{v},")?;
            }
            writeln!(out, "{}", self.labels[i])?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

impl Samples for Dataset {
    fn len(&self) -> usize {
        self.n
    }

    fn feature_dim(&self) -> usize {
        self.m
    }

    fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.m..(i + 1) * self.m]
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }
}

/// Owned minibatch copied out of a dataset in shuffle order.
#[derive(Debug, Clone)]
pub struct Batch {
    features: Vec<f64>,
    labels: Vec<usize>,
    m: usize,
}

impl Samples for Batch {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn feature_dim(&self) -> usize {
        self.m
    }

    fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.m..(i + 1) * self.m]
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }
}

/// Minibatch settings. The permutation for an epoch is a pure function of
/// `(shuffle_seed, epoch)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub drop_last: bool,
}

/// Seeded minibatches for one epoch. The final short batch is kept unless
/// `drop_last` is set.
pub fn minibatches(ds: &Dataset, plan: &BatchPlan, epoch: usize) -> Vec<Batch> {
    assert!(plan.batch_size >= 1, "batch_size must be at least 1");
    let mut rng = SeededRng::derive(plan.shuffle_seed, epoch as u64);
    let perm = rng.permutation(ds.len());
    perm.chunks(plan.batch_size)
        .filter(|chunk| !plan.drop_last || chunk.len() == plan.batch_size)
        .map(|chunk| {
            let mut features = Vec::with_capacity(chunk.len() * ds.feature_dim());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                features.extend_from_slice(ds.features(i));
                labels.push(ds.label(i));
            }
            Batch {
                features,
                labels,
                m: ds.feature_dim(),
            }
        })
        .collect()
}

/// Two interleaved half-circles with Gaussian noise. Class 0 lies on the
/// unit upper half-circle, class 1 on the lower arc shifted to interleave.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset, DataError> {
    if n < 2 {
        return Err(DataError::InvalidParam {
            detail: format!("n {n} must be at least 2"),
        });
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(DataError::InvalidParam {
            detail: format!("noise {noise} must be >= 0"),
        });
    }
    let n0 = n - n / 2;
    let n1 = n / 2;
    let mut rng = SeededRng::new(seed);
    let mut features = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    let arc = |count: usize, i: usize| {
        if count <= 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        }
    };
    for i in 0..n0 {
        let t = arc(n0, i);
        features.push(t.cos() + noise * rng.next_gaussian());
        features.push(t.sin() + noise * rng.next_gaussian());
        labels.push(0);
    }
    for i in 0..n1 {
        let t = arc(n1, i);
        features.push(1.0 - t.cos() + noise * rng.next_gaussian());
        features.push(0.5 - t.sin() + noise * rng.next_gaussian());
        labels.push(1);
    }
    Dataset::new(features, labels, 2, 2)
}

/// Isotropic Gaussian blobs around centers spaced evenly on a circle of
/// radius 2. Labels are blob indices.
pub fn gen_blobs(n: usize, centers: usize, noise: f64, seed: u64) -> Result<Dataset, DataError> {
    if centers < 2 {
        return Err(DataError::InvalidParam {
            detail: format!("centers {centers} must be >= 2"),
        });
    }
    if n < centers {
        return Err(DataError::InvalidParam {
            detail: format!("n {n} must be at least the number of centers {centers}"),
        });
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(DataError::InvalidParam {
            detail: format!("noise {noise} must be >= 0"),
        });
    }
    let mut rng = SeededRng::new(seed);
    let mut features = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for c in 0..centers {
        let count = n / centers + usize::from(c < n % centers);
        let angle = 2.0 * std::f64::consts::PI * c as f64 / centers as f64;
        let (cx, cy) = (2.0 * angle.cos(), 2.0 * angle.sin());
        for _ in 0..count {
            features.push(cx + noise * rng.next_gaussian());
            features.push(cy + noise * rng.next_gaussian());
            labels.push(c);
        }
    }
    Dataset::new(features, labels, 2, centers)
}

/// Two interleaved Archimedean spiral arms with Gaussian noise.
pub fn gen_spirals(n: usize, noise: f64, seed: u64) -> Result<Dataset, DataError> {
    if n < 2 {
        return Err(DataError::InvalidParam {
            detail: format!("n {n} must be at least 2"),
        });
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(DataError::InvalidParam {
            detail: format!("noise {noise} must be >= 0"),
        });
    }
    let mut rng = SeededRng::new(seed);
    let mut features = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    let sweep = 1.5 * std::f64::consts::PI;
    for class in 0..2usize {
        let count = if class == 0 { n - n / 2 } else { n / 2 };
        let offset = class as f64 * std::f64::consts::PI;
        for i in 0..count {
            let frac = if count <= 1 {
                0.0
            } else {
                i as f64 / (count - 1) as f64
            };
            let t = sweep * frac;
            let r = 0.2 + 1.8 * frac;
            features.push(r * (t + offset).cos() + noise * rng.next_gaussian());
            features.push(r * (t + offset).sin() + noise * rng.next_gaussian());
            labels.push(class);
        }
    }
    Dataset::new(features, labels, 2, 2)
}

/// Flips a seeded fraction of labels to a different class.
pub fn flip_labels(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(DataError::InvalidParam {
            detail: format!("flip fraction {fraction} outside [0, 1)"),
        });
    }
    let mut out = ds.clone();
    if ds.n_classes < 2 {
        return Ok(out);
    }
    let k = stable_floor(fraction * ds.len() as f64);
    let mut rng = SeededRng::new(seed);
    let perm = rng.permutation(ds.len());
    for &i in perm.iter().take(k) {
        let old = out.labels[i];
        out.labels[i] = (old + 1 + rng.next_index(ds.n_classes - 1)) % ds.n_classes;
    }
    Ok(out)
}

/// Seeded permutation split. The first `n - floor(test_fraction * n)`
/// permuted rows become the train set, the remainder the test set.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidParam {
            detail: format!("test_fraction {test_fraction} outside (0, 1)"),
        });
    }
    let n_test = stable_floor(test_fraction * ds.len() as f64);
    let n_train = ds.len() - n_test;
    if n_test == 0 || n_train == 0 {
        return Err(DataError::InvalidParam {
            detail: format!(
                "split of {} rows at {test_fraction} leaves an empty side",
                ds.len()
            ),
        });
    }
    let mut rng = SeededRng::new(seed);
    let perm = rng.permutation(ds.len());
    Ok((
        ds.take_rows(&perm[..n_train]),
        ds.take_rows(&perm[n_train..]),
    ))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32, DataError> {
    let end = offset.checked_add(4).ok_or(DataError::UnexpectedEof)?;
    let slice = bytes.get(offset..end).ok_or(DataError::UnexpectedEof)?;
    Ok(u32::from_be_bytes(slice.try_into().expect("4-byte slice")))
}

pub(crate) fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize), DataError> {
    if read_u32_be(bytes, 0)? != IDX_IMAGES_MAGIC {
        return Err(DataError::NotIdx);
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    let pixels = count
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .ok_or(DataError::UnexpectedEof)?;
    let body = bytes.get(16..16 + pixels).ok_or(DataError::UnexpectedEof)?;
    // Unsigned bytes scaled to [0, 1].
    let features = body.iter().map(|&b| b as f64 / 255.0).collect();
    Ok((features, count, rows * cols))
}

pub(crate) fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>, DataError> {
    if read_u32_be(bytes, 0)? != IDX_LABELS_MAGIC {
        return Err(DataError::NotIdx);
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let body = bytes.get(8..8 + count).ok_or(DataError::UnexpectedEof)?;
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Loads a big-endian IDX image/label file pair. Pixel bytes are scaled
/// to `[0, 1]`; the class count is one past the largest label seen.
pub fn load_idx_pair(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    let (features, count, m) = parse_idx_images(&images)?;
    let labels = parse_idx_labels(&labels)?;
    if labels.len() != count {
        return Err(DataError::CountMismatch);
    }
    let n_classes = labels.iter().copied().max().map(|v| v + 1).unwrap_or(0);
    Dataset::new(features, labels, m, n_classes)
}
