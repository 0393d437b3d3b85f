//! Tensors, taped forward passes, reverse-mode gradients, and the
//! softmax cross-entropy loss.

mod loss;
mod net;
mod tensor;

pub use loss::{argmax_lowest, softmax, softmax_cross_entropy};
pub use net::{
    backward, backward_params, forward, forward_staged, BackwardRule, Layer, LayerTrace,
    Network, Overrides, ParamGrads, Tape,
};
pub use tensor::Tensor;
