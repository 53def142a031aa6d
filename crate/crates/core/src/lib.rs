//! Pixel-wise explanation heatmaps for sequential convolutional classifiers
//! (sensitivity analysis, deconvolution, layer-wise relevance propagation)
//! and their objective evaluation by region perturbation and complexity
//! measures.

pub mod attribution;
pub mod complexity;
pub mod datahub;
pub mod netcore;
pub mod perturbeval;
pub mod tensor;

pub use tensor::{Tensor, TensorError};
