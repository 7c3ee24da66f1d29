//! Layer kernels with hand-derived backward passes, the loss, and the
//! optimizer.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod loss;
pub mod optim;
pub mod pool;

pub use activation::{relu_backward, relu_forward};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, batchnorm_train, BatchNormParams,
    BnCache, BnGrads, Mode, RunningStats,
};
pub use conv::{conv2d_backward, conv2d_forward, conv_output_size, ConvCache, ConvGrads};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use loss::{softmax, softmax_cross_entropy};
pub use optim::{lr_at_epoch, sgd_momentum_step, OptimizerState, Param, SgdConfig};
pub use pool::{gap_backward, gap_forward, maxpool_backward, maxpool_forward, MaxPoolCache};
