//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! No broadcasting: every primitive states its operand shapes exactly, and
//! shape disagreements are reported with both shapes and the operation name.

pub mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{
    check_gradients, relative_error, GradCheckReport, DEFAULT_REL_FLOOR, DEFAULT_STEP,
};
pub use tape::{GradStatus, Gradients, Tape, Var};
pub use tensor::Tensor;
