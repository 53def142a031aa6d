//! Minimal sequential network engine: layers, traced forward pass, input
//! gradients, model files and an SGD trainer.

mod backward;
mod layer;
mod model;
mod serialize;
mod train;

use thiserror::Error;

pub use backward::{accumulate_param_grads, gradient_input, zero_param_grads, ParamGrad};
pub(crate) use backward::{deconv_signal, unpool};
pub use layer::{Conv2d, Layer, Linear, MaxPool2d};
pub use model::{argmax, ForwardTrace, Model, ModelBuilder, ParamsMut};
pub use serialize::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION};
pub use train::{accuracy, train_sgd, Checkpoint, TrainConfig};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input shape mismatch: model expects {expected:?}, got {found:?}")]
    InputShape {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("layer {layer}: {reason}")]
    LayerShape { layer: usize, reason: String },
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("non-finite activation{}", match .layer { Some(l) => format!(" after layer {l}"), None => " in input".to_string() })]
    NonFinite { layer: Option<usize> },
    #[error("trace was not produced by this model (parameters changed since forward)")]
    StaleTrace,
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("model file format error: {0}")]
    Format(String),
    #[error("model file version {} unsupported (expected {})", *.found as char, *.expected as char)]
    VersionMismatch { found: u8, expected: u8 },
    #[error("model file truncated at offset {offset} (needed {needed} more bytes)")]
    Truncated { offset: usize, needed: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}
