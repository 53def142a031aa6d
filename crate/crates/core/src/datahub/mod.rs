//! Dataset ingestion (IDX, CIFAR-10 binary, image directories), dataset
//! statistics used by the perturbation operators, and the Dirichlet color
//! model.

mod cifar;
mod dirichlet;
mod idx;
mod imagedir;
mod stats;

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::tensor::Tensor;

pub use cifar::{parse_cifar, CIFAR10_CLASSES, CIFAR_RECORD_LEN};
pub use dirichlet::{fit_dirichlet, fit_dirichlet_simplex, sample_dirichlet, DirichletParams};
pub use idx::{parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use imagedir::load_image_directory;
pub use stats::{mean_image, DatasetStats};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: malformed header at offset {offset}: {reason}")]
    MalformedHeader {
        origin: String,
        offset: usize,
        reason: String,
    },
    #[error("{origin}: truncated at offset {offset} (expected {expected} bytes, found {found})")]
    Truncated {
        origin: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("{origin}: invalid record {record} at offset {offset}: {reason}")]
    BadRecord {
        origin: String,
        record: usize,
        offset: usize,
        reason: String,
    },
    #[error("{path}: unreadable image: {reason}")]
    UnreadableImage { path: String, reason: String },
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error("dataset is empty")]
    Empty,
    #[error("degenerate data for Dirichlet fit: {0}; use the Constant operator instead")]
    Degenerate(String),
    #[error("Dirichlet sampler rejected {rejected} of {window} draws; the fitted parameters are pathological")]
    Rejection { rejected: usize, window: usize },
    #[error("invalid Dirichlet parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Test split when the file or directory name mentions `test` or `t10k`.
    pub fn infer(path: &Path) -> Self {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if name.contains("test") || name.contains("t10k") {
            Split::Test
        } else {
            Split::Train
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Idx,
    CifarBinary,
    ImageDirectory,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "idx" => Ok(Self::Idx),
            "cifar" | "cifar-binary" => Ok(Self::CifarBinary),
            "image-directory" | "dir" => Ok(Self::ImageDirectory),
            other => Err(format!(
                "unknown dataset format {other:?} (expected idx, cifar-binary or image-directory)"
            )),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Idx => "idx",
            Self::CifarBinary => "cifar-binary",
            Self::ImageDirectory => "image-directory",
        })
    }
}

/// Labelled images with pixel values in `[0, 1]`, all of one shape.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<Tensor>,
    labels: Vec<usize>,
    split: Split,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        images: Vec<Tensor>,
        labels: Vec<usize>,
        split: Split,
        class_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if images.len() != labels.len() {
            return Err(DataError::Inconsistent(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= class_names.len()) {
            return Err(DataError::Inconsistent(format!(
                "label {l} of image {i} exceeds class count {}",
                class_names.len()
            )));
        }
        if let Some(first) = images.first() {
            for (i, img) in images.iter().enumerate() {
                if img.shape() != first.shape() {
                    return Err(DataError::Inconsistent(format!(
                        "image {i} has shape {:?}, expected {:?}",
                        img.shape(),
                        first.shape()
                    )));
                }
                if img.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(DataError::Inconsistent(format!(
                        "image {i} has pixel values outside [0, 1]"
                    )));
                }
            }
        }
        Ok(Self {
            images,
            labels,
            split,
            class_names,
        })
    }

    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `[channels, height, width]` of the images, if any.
    pub fn image_shape(&self) -> Option<&[usize]> {
        self.images.first().map(|t| t.shape())
    }

    /// The first `n` examples (or all, if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
            class_names: self.class_names.clone(),
        }
    }
}

/// Loads a dataset. For IDX, `path` names the image file; the label file is
/// found by replacing `images-idx3` with `labels-idx1` in its name.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    match format {
        DatasetFormat::Idx => {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            if !name.contains("images-idx3") {
                return Err(DataError::MalformedHeader {
                    origin: path.display().to_string(),
                    offset: 0,
                    reason: "IDX image file name must contain `images-idx3` to locate labels".into(),
                });
            }
            let label_path = path.with_file_name(name.replace("images-idx3", "labels-idx1"));
            load_idx(path, &label_path)
        }
        DatasetFormat::CifarBinary => {
            let bytes = read_maybe_gz(path)?;
            let (images, labels) = parse_cifar(&bytes, &path.display().to_string())?;
            Dataset::new(
                images,
                labels,
                Split::infer(path),
                CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect(),
            )
        }
        DatasetFormat::ImageDirectory => load_image_directory(path),
    }
}

/// Loads an IDX image file and its IDX label file (either may be gzipped).
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, DataError> {
    let img_bytes = read_maybe_gz(images)?;
    let lbl_bytes = read_maybe_gz(labels)?;
    let imgs = parse_idx_images(&img_bytes, &images.display().to_string())?;
    let lbls = parse_idx_labels(&lbl_bytes, &labels.display().to_string())?;
    if imgs.len() != lbls.len() {
        return Err(DataError::Inconsistent(format!(
            "{} has {} images but {} has {} labels",
            images.display(),
            imgs.len(),
            labels.display(),
            lbls.len()
        )));
    }
    let classes = lbls.iter().max().map_or(0, |&m| m + 1).max(10);
    Dataset::new(
        imgs,
        lbls,
        Split::infer(images),
        (0..classes).map(|c| c.to_string()).collect(),
    )
}

/// Reads a file, transparently inflating gzip content.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let raw = std::fs::read(path).map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| DataError::MalformedHeader {
                origin: path.display().to_string(),
                offset: 0,
                reason: format!("gzip stream: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}
