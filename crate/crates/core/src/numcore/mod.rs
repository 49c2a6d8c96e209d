//! Reverse-mode differentiation over small dense matrices.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, FdReport, REL_ERROR_FLOOR};
pub use params::{Grad, ParamGrads, ParamId, ParamMeta, ParamSet};
pub use tape::{softmax, Gradients, NodeId, OpTag, Tape};
#[cfg(test)]
pub(crate) use tape::sigmoid;
pub use tensor::{matmul, Tensor};
