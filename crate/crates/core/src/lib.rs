//! Ear verification from SIFT keypoints restricted to color-consistent slice regions.
//!
//! The pipeline models the colors inside an ear crop with a Gaussian mixture
//! (vector-quantization initialised EM), assigns every pixel to a component to
//! form slice regions, keeps the regions whose color distribution is close in
//! KL divergence to a reference model, extracts SIFT keypoints from the kept
//! regions only, concatenates them into a template and matches templates with
//! Euclidean-distance or nearest-neighbour strategies.
//!
//! [`evaluation`] reproduces the one-reference/one-probe verification protocol
//! with ROC analysis on a deterministic synthetic ear dataset.

pub mod config;
pub mod divergence;
pub mod enroll;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod matching;
pub mod mixture;
pub mod segmentation;
pub mod sift;
pub mod template_file;

pub use config::{Config, GateMode, SegmentationMode};
pub use error::{Error, ErrorFamily, Result};
pub use imaging::{ColorImage, GrayImage, Mask, PixelSet};
pub use matching::{Decision, MatchParams, MatchResult, MatchStrategy, Template};
pub use mixture::{GaussianComponent, MixtureModel};
pub use segmentation::{SegmentationResult, SliceRegion};
pub use sift::{Keypoint, SiftParams};
