//! Desk-scale laboratory for evolving domain generalization.
//!
//! The crate is organized bottom-up:
//! - [`tensor`] / [`graph`]: dense fp64 tensors and reverse-mode autodiff
//!   with gradients-of-gradients;
//! - [`nn`]: MLPs, losses, optimizers;
//! - [`rng`] / [`datagen`] / [`idx`] / [`dataio`]: seed streams, synthetic
//!   evolving benchmarks, optional IDX image ingestion, on-disk formats;
//! - [`ldda`]: the closed-form linear domain transformer;
//! - [`dda`]: the attention transformer and bi-level meta-training;
//! - [`erm`] / [`config`] / [`report`] / [`runner`] / [`grid`]: baseline and
//!   experiment harness.

pub mod config;
pub mod dataio;
pub mod datagen;
pub mod dda;
pub mod erm;
pub mod error;
pub mod graph;
pub mod grid;
pub mod idx;
pub mod ldda;
pub mod nn;
pub mod report;
pub mod rng;
pub mod runner;
pub mod tensor;

pub use error::{EdgError, Result};
pub use graph::{finite_diff_check, GradMap, Graph, NodeId};
pub use tensor::Tensor;
