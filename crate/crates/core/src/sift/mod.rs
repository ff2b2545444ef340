//! Scale-invariant keypoints: DoG scale space, extrema, localization,
//! orientation assignment and 128-element gradient descriptors.
//!
//! [`extract_sift`] runs the whole chain. The building blocks are public so
//! that each stage can be inspected and tested on its own.

mod descriptor;
mod detect;
mod orientation;
mod scale_space;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Mask};

pub use descriptor::{compute_descriptor, DESCRIPTOR_BINS, DESCRIPTOR_GRID, DESCRIPTOR_LEN};
pub use detect::{detect_extrema, localize_keypoint, Candidate, LocalizedKeypoint, Rejection};
pub use orientation::{assign_orientation, OrientedKeypoint};
pub use scale_space::{
    build_scale_space, gaussian_blur, gaussian_kernel, Octave, Plane, ScaleSpace, ASSUMED_INPUT_BLUR,
    MIN_BASE_SIZE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiftParams {
    /// Number of octaves; 0 picks `floor(log2(min dim)) - 2` of the base image.
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub base_sigma: f64,
    pub initial_upsample: bool,
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub orientation_bins: usize,
    pub peak_ratio: f64,
    pub descriptor_clamp: f64,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            octaves: 0,
            scales_per_octave: 3,
            base_sigma: 1.6,
            initial_upsample: true,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            orientation_bins: 36,
            peak_ratio: 0.8,
            descriptor_clamp: 0.2,
        }
    }
}

impl SiftParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidParameter(format!("sift: {m}")));
        if self.scales_per_octave < 2 {
            return fail("scales_per_octave must be at least 2");
        }
        if !(self.base_sigma > ASSUMED_INPUT_BLUR) || !self.base_sigma.is_finite() {
            return fail("base_sigma must exceed 0.5");
        }
        if !(self.edge_ratio > 1.0) || !self.edge_ratio.is_finite() {
            return fail("edge_ratio must exceed 1");
        }
        if !(self.contrast_threshold >= 0.0) || !self.contrast_threshold.is_finite() {
            return fail("contrast_threshold must be non-negative");
        }
        if self.orientation_bins < 4 {
            return fail("orientation_bins must be at least 4");
        }
        if !(self.peak_ratio > 0.0 && self.peak_ratio <= 1.0) {
            return fail("peak_ratio must lie in (0, 1]");
        }
        if !(self.descriptor_clamp > 0.0 && self.descriptor_clamp <= 1.0) {
            return fail("descriptor_clamp must lie in (0, 1]");
        }
        Ok(())
    }
}

/// A unit-norm 128-element descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Descriptor(pub [f64; DESCRIPTOR_LEN]);

impl Descriptor {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance_sq(&self, other: &Descriptor) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for Descriptor {
    type Error = String;

    fn try_from(v: Vec<f64>) -> std::result::Result<Self, String> {
        let len = v.len();
        <[f64; DESCRIPTOR_LEN]>::try_from(v)
            .map(Descriptor)
            .map_err(|_| format!("descriptor has {len} values, expected {DESCRIPTOR_LEN}"))
    }
}

impl From<Descriptor> for Vec<f64> {
    fn from(d: Descriptor) -> Self {
        d.0.to_vec()
    }
}

/// A located, oriented and described keypoint in input image pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Blur scale in input pixels.
    pub scale: f64,
    /// Radians in `[0, 2 pi)`, measured from +x towards +y (image rows grow downwards).
    pub orientation: f64,
    pub descriptor: Descriptor,
}

/// Keypoints whose rounded location falls inside one slice region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionKeypoints {
    pub region_index: usize,
    pub keypoints: Vec<Keypoint>,
}

struct Sortable {
    octave: usize,
    level: usize,
    keypoint: Keypoint,
}

/// Full pipeline on a grayscale image. Descriptors use the whole image;
/// keypoints whose rounded location is outside `keep_mask` (or the image) are
/// dropped afterwards. Output is in canonical order: octave, level, y, x, angle.
pub fn extract_sift(img: &GrayImage, keep_mask: Option<&Mask>, params: &SiftParams) -> Result<Vec<Keypoint>> {
    if let Some(mask) = keep_mask {
        if (mask.width(), mask.height()) != (img.width(), img.height()) {
            return Err(Error::DimensionMismatch {
                expected: (img.width(), img.height()),
                actual: (mask.width(), mask.height()),
            });
        }
    }
    let ss = build_scale_space(img, params)?;
    let candidates = detect_extrema(&ss, params);

    let mut found: Vec<Sortable> = candidates
        .par_iter()
        .filter_map(|c| localize_keypoint(c, &ss, params).ok())
        .flat_map_iter(|kp| {
            assign_orientation(&kp, &ss, params)
                .into_iter()
                .filter_map(|okp| {
                    let descriptor = compute_descriptor(&okp, &ss, params)?;
                    Some(Sortable {
                        octave: kp.octave,
                        level: kp.level,
                        keypoint: Keypoint {
                            x: kp.x,
                            y: kp.y,
                            scale: kp.scale,
                            orientation: okp.orientation,
                            descriptor,
                        },
                    })
                })
                .collect::<Vec<_>>()
        })
        .filter(|s| {
            let (x, y) = (s.keypoint.x, s.keypoint.y);
            match keep_mask {
                Some(m) => m.contains_point(x, y),
                None => inside(img, x, y),
            }
        })
        .collect();

    found.sort_by(|a, b| {
        a.octave
            .cmp(&b.octave)
            .then(a.level.cmp(&b.level))
            .then(a.keypoint.y.total_cmp(&b.keypoint.y))
            .then(a.keypoint.x.total_cmp(&b.keypoint.x))
            .then(a.keypoint.orientation.total_cmp(&b.keypoint.orientation))
    });
    Ok(found.into_iter().map(|s| s.keypoint).collect())
}

fn inside(img: &GrayImage, x: f64, y: f64) -> bool {
    let (rx, ry) = (x.round(), y.round());
    rx >= 0.0 && ry >= 0.0 && (rx as usize) < img.width() && (ry as usize) < img.height()
}
