//! Reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! A [`Graph`] is a tape of primitive operations. Build it once per example
//! (sequence lengths vary, so graphs are never padded), bind leaves by name,
//! run [`Graph::forward`], then [`Graph::backward`] from a scalar loss.
//!
//! ```
//! use matchlstm::autodiff::{Bindings, Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.param("x");
//! let y = g.tanh(x);
//! let mut b = Bindings::new();
//! b.insert("x", Tensor::scalar(0.0));
//! g.forward(&b).unwrap();
//! assert_eq!(g.backward(y).unwrap().get("x").unwrap().data(), &[1.0]);
//! ```

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{check_gradients, relative_error, GradCheckReport, ParamCheck};
pub use graph::{
    BackwardFault, Bindings, Gradients, Graph, GraphError, LeafKind, NodeId, Op,
};
pub use tensor::Tensor;
