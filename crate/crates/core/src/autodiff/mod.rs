//! Reverse-mode automatic differentiation over [`Tensor`](crate::Tensor)s.

pub mod gradcheck;
pub mod ops;
pub mod suite;
mod tape;

pub use gradcheck::{grad_check, grad_check_inputs, GradCheckOptions, GradCheckReport};
pub use tape::{Fault, Gradients, Tape, Var};
