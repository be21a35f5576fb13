//! Tape-based reverse-mode automatic differentiation over dense `f64`
//! tensors.
//!
//! Forward ops are methods on [`Graph`] that return a [`Var`] handle. Every
//! op validates shapes and rejects non-finite outputs, so a failed forward
//! pass surfaces as an [`Error`](crate::Error) naming the op rather than a
//! NaN that shows up steps later.
//!
//! ```
//! use idal_core::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::vector(vec![3.0]).unwrap()).unwrap();
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq).unwrap();
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
//! ```

mod check;
mod graph;
mod tensor;

pub use check::{analytic_grad, grad_check};
pub use graph::{Graph, Var, LOG_EPS};
pub use tensor::Tensor;

pub(crate) use graph::{softmax_in_place, sq_dist_raw};
