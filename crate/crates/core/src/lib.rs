//! Facial expression recognition with a from-scratch CNN fused with SIFT
//! and Dense SIFT features.
//!
//! The crate is split into four layers:
//!
//! - [`nn`]: tensors, layers with hand-written backward passes, He
//!   initialization, Adam and softmax cross-entropy.
//! - [`sift`]: image gradients, difference-of-Gaussians keypoints, the
//!   128-d descriptor, Dense SIFT, K-means codebooks and bag-of-keypoints.
//! - [`data`]: FER-2013 style CSV ingestion, per-image standardization,
//!   the ten-variant augmentation and k-fold splits.
//! - [`model`]: the three model variants, joint training, fine-tuning,
//!   probability averaging across models, evaluation and checkpoints.

pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod rng;
pub mod sift;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Real, Tensor};
