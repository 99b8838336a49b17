//! Datasets: the two-cluster Gaussian task with an out-of-distribution
//! cluster, MNIST IDX ingestion, image rotation, and seeded splits.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Label carried by out-of-distribution test points. They are never
/// trained on and never counted in selective risk.
pub const OOD_LABEL: usize = usize::MAX;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Feature matrix (`n × d`) with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    /// Number of real classes `m`.
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rank() != 2 || features.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "features {:?} do not match {} labels",
                features.shape(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes && y != OOD_LABEL) {
            return Err(Error::invalid(format!("label {bad} outside [0, {classes})")));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
        }
        Dataset {
            features: Tensor::new(vec![indices.len(), d], data).expect("subset shape"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn is_ood(&self, i: usize) -> bool {
        self.labels[i] == OOD_LABEL
    }

    /// Writes `x1,x2,label` rows; out-of-distribution points get label `-1`.
    pub fn write_xy_csv(&self, path: &Path) -> Result<()> {
        if self.dim() != 2 {
            return Err(Error::invalid("xy export needs 2-d features"));
        }
        let mut out = String::from("x1,x2,label\n");
        for i in 0..self.len() {
            let row = self.features.row(i);
            let label = if self.is_ood(i) { -1 } else { self.labels[i] as i64 };
            out.push_str(&format!("{},{},{}\n", row[0], row[1], label));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianCluster {
    pub mean: [f64; 2],
    /// Per-axis standard deviation (isotropic).
    pub std: f64,
    /// `None` marks the out-of-distribution cluster.
    pub label: Option<usize>,
    pub in_train: bool,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub clusters: Vec<GaussianCluster>,
}

impl Default for GaussianMixtureSpec {
    /// Two overlapping unit-variance clusters at ±(1,1) for training and a
    /// test-only cluster at (5,−5) with variance 0.5.
    fn default() -> Self {
        let cluster = |mean, std, label, in_train| GaussianCluster {
            mean,
            std,
            label,
            in_train,
            count: 1000,
        };
        Self {
            clusters: vec![
                cluster([1.0, 1.0], 1.0, Some(0), true),
                cluster([-1.0, -1.0], 1.0, Some(1), true),
                cluster([5.0, -5.0], 0.5f64.sqrt(), None, false),
            ],
        }
    }
}

impl GaussianMixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clusters.iter().filter(|c| c.label.is_some()).count() < 2 {
            return Err(Error::invalid("need at least two labeled clusters"));
        }
        for c in &self.clusters {
            if c.count == 0 || !(c.std > 0.0) {
                return Err(Error::invalid("clusters need a positive count and std"));
            }
            if c.in_train && c.label.is_none() {
                return Err(Error::invalid("unlabeled clusters cannot be used for training"));
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.clusters.iter().filter_map(|c| c.label).max().map_or(0, |m| m + 1)
    }
}

/// Samples `(train, test)`. Every cluster contributes `count` test points;
/// only `in_train` clusters contribute `count` training points.
pub fn gen_gaussian(spec: &GaussianMixtureSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = |c: &GaussianCluster, xs: &mut Vec<f64>, ys: &mut Vec<usize>| {
        let n = Normal::new(0.0, c.std).expect("std checked positive");
        for _ in 0..c.count {
            xs.push(c.mean[0] + n.sample(&mut rng));
            xs.push(c.mean[1] + n.sample(&mut rng));
            ys.push(c.label.unwrap_or(OOD_LABEL));
        }
    };
    let (mut train_x, mut train_y) = (Vec::new(), Vec::new());
    for c in spec.clusters.iter().filter(|c| c.in_train) {
        sample(c, &mut train_x, &mut train_y);
    }
    let (mut test_x, mut test_y) = (Vec::new(), Vec::new());
    for c in &spec.clusters {
        sample(c, &mut test_x, &mut test_y);
    }
    let classes = spec.classes();
    let train = Dataset::new(Tensor::new(vec![train_y.len(), 2], train_x)?, train_y, classes)?;
    let test = Dataset::new(Tensor::new(vec![test_y.len(), 2], test_x)?, test_y, classes)?;
    Ok((train, test))
}

/// Grayscale images in `[0, 1]` with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    /// `n × rows × cols`.
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl ImageBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.images.shape()[1]
    }

    pub fn cols(&self) -> usize {
        self.images.shape()[2]
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let px = self.rows() * self.cols();
        &self.images.data()[i * px..(i + 1) * px]
    }

    /// Flattens each image into a feature row.
    pub fn to_dataset(&self, classes: usize) -> Result<Dataset> {
        let px = self.rows() * self.cols();
        let features = Tensor::new(vec![self.len(), px], self.images.data().to_vec())?;
        Dataset::new(features, self.labels.clone(), classes)
    }
}

fn read_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = read_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Header of an IDX image file: `(count, rows, cols)`.
pub fn parse_idx_image_header(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize)> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let n = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    Ok((n, rows, cols))
}

/// Decodes an IDX image file; pixel bytes are scaled by `1/255`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let (n, rows, cols) = parse_idx_image_header(bytes, path)?;
    let expected = 16 + n * rows * cols;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let data = bytes[16..expected].iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::new(vec![n, rows, cols], data)
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let n = read_u32(bytes, 4, path)? as usize;
    let expected = 8 + n;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..expected].iter().map(|&b| usize::from(b)).collect())
}

pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<ImageBatch> {
    let image_bytes = fs::read(images).map_err(|e| Error::io(images, e))?;
    let label_bytes = fs::read(labels).map_err(|e| Error::io(labels, e))?;
    let images = parse_idx_images(&image_bytes, images)?;
    let labels = parse_idx_labels(&label_bytes, labels)?;
    if images.shape()[0] != labels.len() {
        return Err(Error::CountMismatch {
            images: images.shape()[0],
            labels: labels.len(),
        });
    }
    Ok(ImageBatch { images, labels })
}

/// Which MNIST split to read from a data directory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

/// Loads the standard file names (`train-images-idx3-ubyte`, ...) from `dir`.
pub fn load_mnist_dir(dir: &Path, split: MnistSplit) -> Result<ImageBatch> {
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    load_mnist_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Encodes images and labels as IDX bytes; the inverse of the parsers.
pub fn encode_idx(images: &[u8], n: usize, rows: usize, cols: usize, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + images.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        img.write_all(&v.to_be_bytes()).expect("vec write");
    }
    img.extend_from_slice(images);
    let mut lab = Vec::with_capacity(8 + labels.len());
    for v in [IDX_LABELS_MAGIC, labels.len() as u32] {
        lab.write_all(&v.to_be_bytes()).expect("vec write");
    }
    lab.extend_from_slice(labels);
    (img, lab)
}

/// Rotates a `rows × cols` image counter-clockwise about its center with
/// bilinear interpolation. Samples falling outside the frame read as 0.
pub fn rotate(image: &[f64], rows: usize, cols: usize, angle_deg: f64) -> Vec<f64> {
    assert_eq!(image.len(), rows * cols, "image buffer does not match its dimensions");
    if angle_deg == 0.0 {
        return image.to_vec();
    }
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let cy = (rows as f64 - 1.0) / 2.0;
    let cx = (cols as f64 - 1.0) / 2.0;
    let pixel = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            0.0
        } else {
            image[r as usize * cols + c as usize]
        }
    };
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let (dy, dx) = (r as f64 - cy, c as f64 - cx);
            // inverse map: rotate the output coordinate back by -angle
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = (1.0 - fy) * ((1.0 - fx) * pixel(y0, x0) + fx * pixel(y0, x0 + 1))
                + fy * ((1.0 - fx) * pixel(y0 + 1, x0) + fx * pixel(y0 + 1, x0 + 1));
            out[r * cols + c] = v;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub validation_fraction: f64,
    pub seed: u64,
}

/// Seeded shuffle of `0..n`, cut into `(validation, remainder)`.
pub fn split(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let f = spec.validation_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::invalid(format!("validation fraction {f} outside (0, 1)")));
    }
    let k = (f * n as f64).round() as usize;
    if k == 0 || k == n {
        return Err(Error::invalid(format!(
            "fraction {f} of {n} items leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let rest = idx.split_off(k);
    Ok((idx, rest))
}
