//! Training and measurement toolkit for studying per-layer feature collapse
//! in small fixed-width networks.
//!
//! The crate is organized around a handful of subsystems:
//!
//! - [`tensor`] / [`rng`]: dense f64 tensors and a seeded, splittable PCG
//!   generator. Every pipeline is keyed by one seed and reproduces bit-identically.
//! - [`nn`]: MLP and ConvNet builders, forward evaluation with per-block
//!   feature capture, exact backpropagation, and a binary checkpoint format.
//! - [`optim`]: mini-batch SGD with momentum, L2 weight decay, and a stepwise
//!   learning-rate schedule.
//! - [`data`]: balanced labeled datasets — synthetic Gaussian mixtures, IDX
//!   file ingestion, standardization, balanced splits, and label-noise injection.
//! - [`metrics`]: class-distance normalized variance (CDNV), nearest
//!   class-center (NCC) error rates, effective depth, and linear probes.
//! - [`bound`]: minimal-depth search, the misclassification-uniformity
//!   diagnostic, and the comparative generalization bound estimator.
//!
//! Sweep-style workloads (independent training runs, per-layer metric
//! evaluation) fan out through [`exec`], which uses rayon when the `parallel`
//! feature (default) is enabled and falls back to a sequential loop otherwise.
//! Results are merged by index, so the two paths produce identical output.

pub mod bound;
pub mod data;
pub mod exec;
pub mod mathfn;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use rng::SeededRng;
pub use tensor::Tensor;
