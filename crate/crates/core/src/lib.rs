//! Contrastive training of parametric 2D image embeddings.
//!
//! This crate trains a convolutional encoder so that two augmented views of
//! the same image land next to each other in a low-dimensional output space,
//! using an InfoNCE objective over a similarity kernel (cosine, Gaussian, or
//! Cauchy). A three-stage schedule first pretrains with a wide output layer,
//! then fits a fresh low-dimensional readout on the frozen network, and
//! finally fine-tunes everything. The result is a map from pixels straight
//! into a plottable 2D plane.
//!
//! The crate is organized along the data flow:
//!
//! * [`numeric`] — dense matrices, a symmetric eigensolver, seedable streams
//! * [`kernels`] — similarity kernels, the InfoNCE losses and their gradients
//! * [`augment`] — the stochastic two-view augmentation pipeline
//! * [`data`] — CIFAR binary ingestion, synthetic datasets, epoch batching
//! * [`encoder`] — the backbone + projection head with manual backprop
//! * [`trainer`] — SGD with momentum, LR schedules, the three-stage protocol
//! * [`eval`] — kNN accuracy, linear probe, spectra, norms, k-means + ARI
//!
//! The narrative guide under `book/` walks through each of these; its code
//! snippets are compiled as doc-tests via the [`guide`] module.

pub mod augment;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod guide;
pub mod kernels;
pub mod numeric;
pub mod trainer;

pub use error::{Error, Result};
