use crate::tensor::Tensor;

use super::dirichlet::{fit_dirichlet, DirichletParams};
use super::{DataError, Dataset};

/// Dataset-level quantities the Constant and Dirichlet operators need.
#[derive(Debug, Clone, Default)]
pub struct DatasetStats {
    pub mean_image: Option<Tensor>,
    pub dirichlet: Option<DirichletParams>,
}

impl DatasetStats {
    /// Mean image plus, when the data is not degenerate, the Dirichlet fit.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self, DataError> {
        let mean = mean_image(dataset)?;
        let dirichlet = match fit_dirichlet(dataset) {
            Ok(p) => Some(p),
            Err(DataError::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            mean_image: Some(mean),
            dirichlet,
        })
    }
}

/// Per-location, per-channel arithmetic mean over all images.
pub fn mean_image(dataset: &Dataset) -> Result<Tensor, DataError> {
    let first = dataset.images().first().ok_or(DataError::Empty)?;
    let mut acc = vec![0.0; first.len()];
    for img in dataset.images() {
        for (a, v) in acc.iter_mut().zip(img.data()) {
            *a += v;
        }
    }
    let n = dataset.len() as f64;
    // clamp guards against the last-ulp overshoot of a long sum of ones
    let data = acc.into_iter().map(|a| (a / n).clamp(0.0, 1.0)).collect();
    Ok(Tensor::from_parts(first.shape().to_vec(), data))
}
