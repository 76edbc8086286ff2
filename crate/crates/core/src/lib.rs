//! Contrastive neural processes for self-supervised time-series
//! representation learning.
//!
//! A convolutional conditional neural process encodes randomly sampled
//! context sets of each segment into a representation vector. Training
//! combines the decoder's Gaussian likelihood on the full window with a
//! contrastive term that pulls together views of the same segment and pushes
//! apart views of different segments. [`eval`] measures the learned
//! representations with a linear probe and clustering indices.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod optim;
pub mod parallel;
pub mod tensor;
pub mod trainer;

pub use autodiff::{Gradients, Tape, Var};
pub use config::TrainConfig;
pub use error::{Error, Result};
pub use model::{ConvCnpModel, GaussianPrediction, ModelConfig};
pub use tensor::Tensor;
