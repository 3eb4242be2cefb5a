//! Numeric core: dense `f64` tensors, a reverse-mode autodiff graph, and a
//! finite-difference gradient checker.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, ParamCheck};
pub use graph::{Graph, NodeId};
pub use tensor::{dot, Dims, Tensor};
