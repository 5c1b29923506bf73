//! Dense `f64` tensors with reverse-mode automatic differentiation.
//!
//! The op set is deliberately small: what a skeleton-sequence network
//! needs (affine maps, joint mixing, (time, joint) convolutions, layer and
//! batch normalization, time-axis resampling, cross-entropy) plus a
//! finite-difference [`gradcheck`] harness to verify every derivative rule.
//!
//! Feature tensors follow a `[.., T, V, C]` layout: time third from last,
//! joints second from last, channels last.

pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod suite;
pub mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{gradcheck, relative_error, GradcheckReport, GRAD_FLOOR};
pub use ops::norm::{BatchNormState, BatchStats};
pub use suite::{run_op_suite, OpCheck};
pub use tensor::{BackwardOp, Tensor};
