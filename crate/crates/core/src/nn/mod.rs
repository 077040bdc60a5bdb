//! Small CPU tensor kernels backing the network executor: convolution via
//! im2col + GEMM, pooling, transposed convolution, dense layers, and Adam.

mod adam;
mod ops;
mod tensor;

pub use adam::Adam;
pub use ops::*;
pub use tensor::Tensor;
