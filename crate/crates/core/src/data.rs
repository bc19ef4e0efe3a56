//! Labelled datasets: CSV and IDX readers plus a seeded Gaussian-blobs
//! generator.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::network::Tensor;

const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    feature_shape: Vec<usize>,
    features: Vec<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(feature_shape: Vec<usize>, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let width: usize = feature_shape.iter().product();
        if width == 0 {
            return Err(Error::Dataset("feature shape has no elements".into()));
        }
        if features.len() != width * labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature values do not split into {} samples of {width}",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            feature_shape,
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_shape(&self) -> &[usize] {
        &self.feature_shape
    }

    pub fn feature_len(&self) -> usize {
        self.feature_shape.iter().product()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self, i: usize) -> &[f64] {
        let w = self.feature_len();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn input(&self, i: usize) -> Tensor {
        Tensor::new(self.feature_shape.clone(), self.features(i).to_vec())
    }

    /// Samples `0..n` (or all of them if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let w = self.feature_len();
        Dataset {
            feature_shape: self.feature_shape.clone(),
            features: self.features[..n * w].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }

    /// The same samples with every feature tensor flattened to a vector.
    pub fn flattened(&self) -> Dataset {
        Dataset {
            feature_shape: vec![self.feature_len()],
            ..self.clone()
        }
    }

    /// Read `label,feature,...` rows. A first row whose label is not an
    /// integer is treated as a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut width = None;
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let Some(first) = record.get(0) else { continue };
            let label = match first.parse::<usize>() {
                Ok(l) => l,
                Err(_) if row == 0 => continue,
                Err(_) => {
                    return Err(Error::Dataset(format!(
                        "row {}: label {first:?} is not a non-negative integer",
                        row + 1
                    )))
                }
            };
            let n = record.len() - 1;
            if *width.get_or_insert(n) != n || n == 0 {
                return Err(Error::Dataset(format!(
                    "row {}: expected {} features, found {n}",
                    row + 1,
                    width.unwrap_or(0)
                )));
            }
            for field in record.iter().skip(1) {
                features.push(field.parse::<f64>().map_err(|e| {
                    Error::Dataset(format!("row {}: bad feature {field:?}: {e}", row + 1))
                })?);
            }
            labels.push(label);
        }
        let width = width.ok_or_else(|| Error::Dataset("CSV file has no samples".into()))?;
        Self::new(vec![width], features, labels)
    }

    /// Read an IDX image file (`0x00000803`) and label file (`0x00000801`).
    /// Pixels are scaled to `[0, 1]` and shaped `[1, rows, cols]`.
    pub fn from_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        let img = fs::read(images)?;
        let lab = fs::read(labels)?;
        let (label_dims, label_bytes) = parse_idx(&lab, IDX_LABELS_MAGIC)?;
        let (image_dims, image_bytes) = parse_idx(&img, IDX_IMAGES_MAGIC)?;
        let &[count] = label_dims.as_slice() else {
            return Err(Error::Dataset("IDX label file must be one-dimensional".into()));
        };
        let &[n, rows, cols] = image_dims.as_slice() else {
            return Err(Error::Dataset("IDX image file must be three-dimensional".into()));
        };
        if n != count {
            return Err(Error::Dataset(format!(
                "{n} images but {count} labels"
            )));
        }
        let features = image_bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        let labels = label_bytes.iter().map(|&b| usize::from(b)).collect();
        Self::new(vec![1, rows, cols], features, labels)
    }
}

fn read_be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Dataset("IDX header truncated".into()))
}

/// Returns the dimension sizes and the unsigned-byte payload.
fn parse_idx(bytes: &[u8], magic: u32) -> Result<(Vec<usize>, &[u8])> {
    let found = read_be_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::Dataset(format!(
            "IDX magic {found:#010x}, expected {magic:#010x}"
        )));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|d| read_be_u32(bytes, 4 + 4 * d).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndim;
    let len: usize = dims.iter().product();
    let payload = bytes
        .get(start..start + len)
        .ok_or_else(|| Error::Dataset("IDX payload truncated".into()))?;
    Ok((dims, payload))
}

/// Isotropic Gaussian clusters in the plane with centres evenly spaced on a
/// circle. Cluster `k` is labelled `k % classes`, so `clusters = 2 * classes`
/// gives every class two opposite clusters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlobsConfig {
    pub classes: usize,
    pub clusters: usize,
    pub samples_per_cluster: usize,
    pub radius: f64,
    pub std_dev: f64,
    pub seed: u64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            clusters: 2,
            samples_per_cluster: 500,
            radius: 1.0,
            std_dev: 0.5,
            seed: 0,
        }
    }
}

impl BlobsConfig {
    /// Samples are interleaved by cluster: `0, 1, ..., clusters-1, 0, 1, ...`.
    pub fn generate(&self) -> Result<Dataset> {
        if self.classes < 1 || self.samples_per_cluster < 1 || self.clusters < self.classes {
            return Err(Error::Dataset(
                "blobs need at least one class, one sample, and a cluster per class".into(),
            ));
        }
        let noise = Normal::new(0.0, self.std_dev)
            .map_err(|e| Error::Dataset(format!("blob spread: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let centres: Vec<(f64, f64)> = (0..self.clusters)
            .map(|k| {
                let angle = 2.0 * PI * k as f64 / self.clusters as f64;
                (self.radius * angle.cos(), self.radius * angle.sin())
            })
            .collect();
        let n = self.clusters * self.samples_per_cluster;
        let mut features = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % self.clusters;
            features.push(centres[k].0 + noise.sample(&mut rng));
            features.push(centres[k].1 + noise.sample(&mut rng));
            labels.push(k % self.classes);
        }
        Dataset::new(vec![2], features, labels)
    }
}
