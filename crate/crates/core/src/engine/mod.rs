//! Numerical engine: scalars, deterministic RNG, tensors, and the autodiff tape.

pub mod gradcheck;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_params};
pub use rng::{fnv1a64, tag, Rng};
pub use scalar::Scalar;
pub use tape::{ElemKind, ParamStore, Pid, Tape, Var};
pub use tensor::{numel, Tensor};
