//! Miniature deep-learning engine and the LDFNet RGB-D segmentation network.
//!
//! The crate is layered bottom-up:
//! - [`tensor`] and [`autodiff`]: dense tensors and reverse-mode differentiation
//! - [`nn`]: parameter storage, primitive layers and the composite blocks
//! - [`model`]: the two-branch network and its ablation variants
//! - [`data`], [`train`], [`metrics`], [`analyzer`]: everything around the model

pub mod analyzer;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use labels::{LabelMap, IGNORE_INDEX};
pub use tensor::{Scalar, Tensor};
pub use metrics::ConfusionMatrix;
pub use model::{build_model, Checkpoint, ModelConfig, ModelGraph, ModelInputs, Variant};
pub use train::TrainConfig;
