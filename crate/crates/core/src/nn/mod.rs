//! Minimal dense-network kernel: matrices, layers, loss and SGD.

mod layer;
mod loss;
mod matrix;
mod optim;

pub use layer::{
    glorot_limit, layer_backward, layer_forward, Activation, DenseGrads, DenseParams, LayerCache,
    LayerKind, LayerSpec,
};
pub use loss::{argmax, count_correct, softmax_cross_entropy};
pub use matrix::Matrix;
pub use optim::sgd_step;
pub(crate) use optim::sgd_slice;
