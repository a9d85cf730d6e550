//! Minimal dense-tensor engine with recorded forward operations and
//! reverse-mode gradient accumulation.
//!
//! Tensors are rank-4 (batch, channel, height, width) in row-major layout.
//! Every forward op is recorded on a [`Tape`]; [`Tape::backward`] replays the
//! recording in reverse and returns per-node gradients. Gradient buffers are
//! freshly zero-initialized on every backward call — there is no cross-call
//! accumulation.
//!
//! The element type is generic over [`Scalar`] (`f32` or `f64`). Gradient
//! checking is intended to run at `f64`; training may run at `f32`.

mod error;
mod gradcheck;
mod kernels;
mod scalar;
mod store;
mod tape;
mod tensor;

pub use error::AdError;
pub use gradcheck::{grad_check, grad_check_weighted, GradCheckReport};
pub use scalar::{Dtype, Scalar};
pub use store::{BoundParams, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Shape, Tensor};
