//! A small dense tensor engine with reverse-mode differentiation.
//!
//! Values live on a [`Tape`]; every operation appends a node and returns a
//! [`Var`] handle. [`Tape::backward`] walks the nodes in reverse execution
//! order and accumulates gradients additively at fan-out. Parameters are held
//! in a [`ParamSet`] outside the tape, bound per forward pass, and updated by
//! [`adam_step`].
//!
//! Layouts are row-major; images are `NCHW`. The only broadcast is the
//! per-channel bias of the convolutions.

mod conv;
pub mod fault;
mod float;
mod gradcheck;
mod optim;
pub mod suite;
mod tape;
mod tensor;

pub use float::Float;
pub use gradcheck::{grad_check, grad_check_sampled, grad_check_scaled};
pub use optim::{adam_step, AdamConfig, BoundParams, Param, ParamId, ParamSet};
pub use tape::{OpKind, Tape, Var};
pub use tensor::Tensor;
