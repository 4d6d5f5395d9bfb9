//! File codecs, the disparity colormap, the synthetic stereogram generator
//! and dataset directories.

pub mod colormap;
pub mod config;
pub mod dataset;
pub mod generator;
pub mod pnm;

pub use colormap::{build_colormap, colorize, ColorizeRange, ColormapLut};
pub use config::parse_config;
pub use dataset::{load_dataset, load_sample, GroundTruth, ManifestEntry};
pub use generator::{gen_stereogram, Scene, StereoSample, Stereogram};
pub use pnm::{decode_disparity, decode_image, encode_disparity, encode_image};
