//! Dense numerical substrate: matrices, parameter storage, reverse-mode
//! differentiation and its finite-difference check.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckEntry, GradCheckReport};
pub use params::{ParamId, ParamStore};
pub use tape::{activate, Activation, Gradients, RowMap, Tape, Var};
pub use tensor::Tensor2;
