//! Multi-task pedestrian attribute recognition with hard-attention masking.
//!
//! This crate is `no_std` (it needs `alloc`) and holds every algorithmic
//! piece of the system: a reverse-mode autodiff tape over dense tensors, the
//! residual backbone and per-task branch heads, the element-wise mask
//! multiplication layer, the category-weighted losses, the mean-accuracy
//! metric, the image preprocessing/augmentation/synthesis pipeline and the
//! training engine. File formats, the CLI and anything touching the
//! filesystem live in the companion `maskpar` crate.
#![cfg_attr(not(test), no_std)]
// `!(x < y)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod ablation;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod policy;
pub mod real;
pub mod rng;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Graph, TensorId};
pub use error::{Error, Result};
pub use losses::{LossConfig, LossKind};
pub use metrics::{mean_accuracy, MetricReport};
pub use model::{Bindings, Model, ModelConfig, Prediction};
pub use policy::TaskPolicy;
pub use real::Real;
pub use tensor::Tensor;
