//! CAM-capable classifier: architecture spec, network, training, and
//! model serialization.

pub mod model_file;
pub mod network;
pub mod spec;
pub mod train;

pub use network::{ForwardOutput, Gradients, Network, Trace};
pub use spec::{Activation, ConvSpec, LayerSpec, NetworkSpec};
pub use train::{train, EpochLog, TrainConfig, TrainSample};
