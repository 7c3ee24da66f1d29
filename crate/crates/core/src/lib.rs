//! Weakly-supervised lesion localization for retinal fundus images.
//!
//! A convolutional classifier ending in global average pooling and a single
//! dense layer is trained on image-level labels only. Its class activation
//! maps are thresholded into scored region proposals, which are evaluated
//! against annotated lesions at image level and lesion level (FROC).
//!
//! ```no_run
//! use lesioncam::cam::{class_activation_map, DEFAULT_CAM_CLASS};
//! use lesioncam::net::{Network, NetworkSpec};
//! use lesioncam::proposal::{propose, ProposalConfig};
//! use lesioncam::tensor::Tensor;
//!
//! let net = Network::<f32>::build(NetworkSpec::toy(), 7)?;
//! let image = Tensor::zeros(&[1, 64, 64]);
//! let cam = class_activation_map(&net, &image, DEFAULT_CAM_CLASS)?;
//! let regions = propose(&cam.heatmap, ProposalConfig::default())?;
//! # Ok::<(), lesioncam::Error>(())
//! ```

pub mod cam;
pub mod cli;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod net;
pub mod nn;
pub mod pipeline;
pub mod pixel;
pub mod proposal;
pub mod tensor;

pub use error::{Error, ModelFileError, Result};
