//! Two-perspective skeleton modeling at desk scale.
//!
//! The crate provides:
//! - [`autodiff`] — dense tensors, a recorded-primitive reverse-mode graph and a
//!   finite-difference gradient checker. Everything downstream differentiates
//!   through this substrate.
//! - [`data`] — skeleton sequences, a canonical JSON dataset format, dataset
//!   adapters, bone derivation, temporal resampling, synthetic action
//!   generation and voxelization into the sparse format.
//! - [`sem`] — the semantic-perspective network: unified / single-frame /
//!   cross-frame self-attention, global regularization, the multi-scale
//!   temporal feed-forward layer and the SEM block/net.
//! - [`sparse`] — a generalized sparse convolution engine over 4-D coordinates
//!   (conv, max-pool, coalescing) plus a dense reference oracle.
//! - [`spa`] — the spatial-perspective network built from the sparse engine:
//!   SPA-3+1D and SPA-4D blocks and the SPA net.
//! - [`train`] — loss, metrics, SGD training loop, score fusion and the
//!   experiment configuration consumed by the CLI.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod sem;
pub mod spa;
pub mod sparse;
pub mod suite;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::DenseTensor;
