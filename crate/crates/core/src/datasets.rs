//! Synthetic Gaussian blobs and an MNIST IDX loader.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: bad magic 0x{found:08x} at offset {offset} (expected 0x{expected:08x})")]
    BadMagic {
        path: PathBuf,
        offset: usize,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated at offset {offset} (needed {needed} more bytes)")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
    },
    #[error("{images}: {image_count} images but {labels}: {label_count} labels")]
    CountMismatch {
        images: PathBuf,
        labels: PathBuf,
        image_count: usize,
        label_count: usize,
    },
    #[error("invalid blobs config: {0}")]
    InvalidConfig(String),
    #[error("{path}: label {label} at offset {offset} is not a digit")]
    BadLabel {
        path: PathBuf,
        offset: usize,
        label: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        classes: usize,
        split: Split,
    ) -> Result<Self, DataError> {
        if features.nrows() != labels.len() {
            return Err(DataError::InvalidConfig(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(DataError::InvalidConfig(format!(
                "label {bad} outside [0, {classes})"
            )));
        }
        Ok(Self {
            features,
            labels,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }
}

/// Isotropic Gaussian classes with means spaced evenly on a circle in the
/// first two coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobsConfig {
    pub classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    pub sigma: f64,
    pub radius: f64,
    pub seed: u64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            dim: 2,
            n_per_class: 250,
            sigma: 0.5,
            radius: 2.0,
            seed: 0,
        }
    }
}

/// Draws `n_per_class` points per class and splits them 80/20. Within each
/// class every fifth draw goes to the test split, so both splits stay
/// class-balanced.
pub fn make_blobs(cfg: &BlobsConfig) -> Result<(Dataset, Dataset), DataError> {
    if cfg.classes < 2 || cfg.dim < 2 || cfg.n_per_class == 0 {
        return Err(DataError::InvalidConfig(format!(
            "classes >= 2, dim >= 2, n_per_class >= 1 required (got {}, {}, {})",
            cfg.classes, cfg.dim, cfg.n_per_class
        )));
    }
    if !(cfg.sigma > 0.0 && cfg.sigma.is_finite() && cfg.radius > 0.0 && cfg.radius.is_finite()) {
        return Err(DataError::InvalidConfig(
            "sigma and radius must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train = (Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new());
    for j in 0..cfg.n_per_class {
        for k in 0..cfg.classes {
            let angle = 2.0 * PI * k as f64 / cfg.classes as f64;
            let target = if j % 5 == 4 { &mut test } else { &mut train };
            for d in 0..cfg.dim {
                let mean = match d {
                    0 => cfg.radius * angle.cos(),
                    1 => cfg.radius * angle.sin(),
                    _ => 0.0,
                };
                let noise: f64 = StandardNormal.sample(&mut rng);
                target.0.push(mean + cfg.sigma * noise);
            }
            target.1.push(k);
        }
    }
    let build = |(x, y): (Vec<f64>, Vec<usize>), split| {
        let n = y.len();
        let features = Array2::from_shape_vec((n, cfg.dim), x).expect("row-major blob buffer");
        Dataset::new(features, y, cfg.classes, split)
    };
    Ok((build(train, Split::Train)?, build(test, Split::Test)?))
}

fn read_all(path: &Path) -> Result<Vec<u8>, DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file)
            .read_to_end(&mut bytes)
            .map_err(io_err)?;
    } else {
        io::BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(io_err)?;
    }
    Ok(bytes)
}

struct IdxCursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl IdxCursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DataError> {
        let available = self.bytes.len() - self.offset;
        if available < n {
            return Err(DataError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.offset,
                needed: n - available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<(), DataError> {
        let offset = self.offset;
        let found = self.u32()?;
        if found != expected {
            return Err(DataError::BadMagic {
                path: self.path.to_path_buf(),
                offset,
                found,
                expected,
            });
        }
        Ok(())
    }
}

/// Raw IDX image file contents: `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>), DataError> {
    let bytes = read_all(path)?;
    let mut cur = IdxCursor {
        path,
        bytes: &bytes,
        offset: 0,
    };
    cur.magic(IDX_IMAGES_MAGIC)?;
    let count = cur.u32()? as usize;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let pixels = cur.take(count * rows * cols)?.to_vec();
    Ok((count, rows, cols, pixels))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let bytes = read_all(path)?;
    let mut cur = IdxCursor {
        path,
        bytes: &bytes,
        offset: 0,
    };
    cur.magic(IDX_LABELS_MAGIC)?;
    let count = cur.u32()? as usize;
    Ok(cur.take(count)?.to_vec())
}

/// Loads an MNIST-style image/label file pair. Pixels are scaled to
/// `[0, 1]`; files ending in `.gz` are decompressed on the fly.
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    split: Split,
) -> Result<Dataset, DataError> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let (count, rows, cols, pixels) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != count {
        return Err(DataError::CountMismatch {
            images: images_path.to_path_buf(),
            labels: labels_path.to_path_buf(),
            image_count: count,
            label_count: labels.len(),
        });
    }
    if let Some(i) = labels.iter().position(|&l| l >= 10) {
        return Err(DataError::BadLabel {
            path: labels_path.to_path_buf(),
            offset: 8 + i,
            label: labels[i],
        });
    }
    let features = Array2::from_shape_vec(
        (count, rows * cols),
        pixels.into_iter().map(|p| f64::from(p) / 255.0).collect(),
    )
    .expect("pixel count checked by the reader");
    Dataset::new(
        features,
        labels.into_iter().map(usize::from).collect(),
        10,
        split,
    )
}

/// Loads the four canonical MNIST files from a directory, accepting either
/// the plain or the `.gz` variants.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset), DataError> {
    let dir = dir.as_ref();
    let find = |stem: &str| {
        let plain = dir.join(stem);
        if plain.exists() {
            plain
        } else {
            dir.join(format!("{stem}.gz"))
        }
    };
    let train = load_mnist_idx(
        find("train-images-idx3-ubyte"),
        find("train-labels-idx1-ubyte"),
        Split::Train,
    )?;
    let test = load_mnist_idx(
        find("t10k-images-idx3-ubyte"),
        find("t10k-labels-idx1-ubyte"),
        Split::Test,
    )?;
    Ok((train, test))
}

/// Writes an IDX image file. `pixels` is `count * rows * cols` bytes.
pub fn write_idx_images(
    path: &Path,
    count: usize,
    rows: usize,
    cols: usize,
    pixels: &[u8],
) -> io::Result<()> {
    assert_eq!(pixels.len(), count * rows * cols, "pixel buffer size");
    let mut out = io::BufWriter::new(File::create(path)?);
    for v in [IDX_IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.write_all(&v.to_be_bytes())?;
    }
    out.write_all(pixels)?;
    out.flush()
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> io::Result<()> {
    let mut out = io::BufWriter::new(File::create(path)?);
    out.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    out.write_all(&(labels.len() as u32).to_be_bytes())?;
    out.write_all(labels)?;
    out.flush()
}
