//! From-scratch trainable convolutional network: tensors, layers, the
//! contracting architecture, initialization, SGD, and the training loop.

pub mod batchnorm;
pub mod conv;
pub mod init;
pub mod network;
pub mod optim;
pub mod tensor;
pub mod train;

pub use batchnorm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use conv::Conv2d;
pub use init::xavier_init;
pub use network::{
    build_contracting, build_deepbf, build_for_input, Gradients, Layer, LayerGrads, Network,
    Trace, Variant, FOCUSED_IN_CH, FOCUSED_IN_H, FOCUSED_IN_W, FOCUSED_OUT_CH, PLANEWAVE_IN_CH,
    PLANEWAVE_IN_H, PLANEWAVE_IN_W, PLANEWAVE_OUT_CH,
};
pub use optim::{sgd_step, TrainConfig};
pub use tensor::Tensor4;
pub use train::{eval_loss, mse, train, EpochStats, TrainReport, TrainSample};
