//! Conditional adversarial domain adaptation with information
//! maximisation, class-confusion and kernel-discrepancy regularisers,
//! built on a small reverse-mode autodiff engine over `f64` tensors.
//!
//! * [`autodiff`] – tensors, the tape and gradient checking.
//! * [`losses`] – every loss term plus the conditioning maps.
//! * [`models`] – extractor, classifier, discriminator.
//! * [`data`] – synthetic domain-shift generator, CSV I/O, batching.
//! * [`trainer`] – training loop, pseudo-labels, checkpoints, ablations.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
mod error;
pub mod gradcheck;
pub mod losses;
pub mod models;
pub mod trainer;

pub use autodiff::{Graph, Tensor, Var};
pub use data::{generate_shift_pair, Dataset, Domain, ShiftSpec};
pub use error::{Error, ErrorKind, Result};
pub use trainer::{TrainConfig, Trainer};
