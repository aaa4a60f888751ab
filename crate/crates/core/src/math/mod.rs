//! Dense tensor arithmetic with paired forward/backward kernels.

pub mod conv;
pub mod gradcheck;
pub mod ops;
pub mod tensor;

pub use conv::{conv1d_backward, conv1d_dilated, conv1d_forward, Conv1dCache, Conv1dGrads};
pub use gradcheck::{grad_check, relative_error};
pub use ops::{relu, relu_backward, softmax_rows, softmax_rows_backward, transpose};
pub use tensor::{matmul_into, MatRef, Precision, Real, Tensor};
