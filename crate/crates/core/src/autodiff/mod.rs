//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation as it is evaluated. Calling
//! [`Graph::backward`] on a scalar node walks the graph in reverse and
//! accumulates vector-Jacobian products into each node's gradient.
//!
//! ```
//! use dg_core::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.mean(sq);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).data(), &[2.0 / 3.0, 4.0 / 3.0, 2.0]);
//! ```
//!
//! The op set is what small MLPs trained with the gambler's loss need:
//! matmul, bias broadcast, tanh, relu, log-softmax, elementwise
//! log/exp/mul/log-add-exp, column slicing, per-row gathers and reductions.

mod graph;
mod tensor;

pub use graph::{log_add_exp, log_sum_exp, Graph, Var};
pub use tensor::Tensor;
