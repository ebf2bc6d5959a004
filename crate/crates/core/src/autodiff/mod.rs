//! Reverse-mode automatic differentiation over small dense arrays, and Adam.

mod adam;
mod array;
mod graph;
mod linalg;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use array::Array;
pub use graph::{gradient_norm, sigmoid, GradientMap, Graph, Var};
