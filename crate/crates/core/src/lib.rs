//! Relational-bottleneck laboratory: a small deterministic deep-learning
//! stack with relational cross-attention modules, synthetic relational tasks,
//! and an experiment harness for model comparisons.

pub mod engine;
pub mod nn;
pub mod error;
pub mod arch;
pub mod relational;
pub mod tasks;
pub mod harness;

pub use engine::{ElemKind, ParamStore, Pid, Rng, Scalar, Tape, Tensor, Var};
pub use error::{LabError, Result};
