//! Minimal CPU tensor engine: strided GEMM convolutions, a recording tape
//! for reverse-mode gradients, and the Adam optimizer.

mod adam;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use adam::Adam;
pub use params::{fan_in_uniform, Gradients, ParamSet};
pub use scalar::Scalar;
pub use tape::{ConvDesc, NodeId, Tape};
pub use tensor::Tensor;
