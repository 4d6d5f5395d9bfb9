//! Deep stereo disparity estimation: cost-volume networks, a semi-supervised
//! photometric loss, evaluation metrics, file codecs and a trainer, built on a
//! small reverse-mode autodiff engine.

pub mod autodiff;
pub mod bench;
pub mod disparity;
pub mod error;
pub mod io;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod tensor;
pub mod train;

pub use disparity::DisparityMap;
pub use error::{Error, Result};
pub use net::{Model, ModelConfig, Variant};
pub use tensor::{Scalar, Tensor};
