//! Image-to-template pipeline.
//!
//! [`prepare`] does the per-image work that does not depend on what the image
//! is compared against: mixture fit, pixel classification and SIFT over the
//! whole mask. [`build_template`] then gates the regions against a reference
//! model and fuses the keypoints of the kept regions. Splitting the two lets
//! one prepared probe be gated against many references cheaply.

use log::debug;

use crate::config::{Config, SegmentationMode};
use crate::error::Result;
use crate::imaging::{equalize_histogram, masked_pixels, to_grayscale, ColorImage, Mask, PixelSet};
use crate::matching::{fuse_template, Template};
use crate::mixture::{fit_gmm, MixtureModel};
use crate::segmentation::{gate_regions, segment, SegmentationResult, OUTSIDE_MASK};
use crate::sift::{extract_sift, Keypoint, RegionKeypoints};

/// Region index used for every keypoint when no segmentation is applied.
pub const WHOLE_CROP_REGION: usize = 0;

#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub pixels: PixelSet,
    pub model: MixtureModel,
    /// Ungated segmentation of the masked pixels.
    pub segmentation: SegmentationResult,
    /// Keypoints inside the mask, in canonical order.
    pub keypoints: Vec<Keypoint>,
    /// Mixture component owning each keypoint's rounded location.
    pub keypoint_components: Vec<usize>,
}

/// A template together with the gated segmentation it came from.
#[derive(Debug, Clone)]
pub struct Enrollment {
    pub template: Template,
    pub segmentation: Option<SegmentationResult>,
}

/// Fit, classify and extract. A missing mask selects the whole image.
pub fn prepare(img: &ColorImage, mask: Option<&Mask>, cfg: &Config) -> Result<PreparedImage> {
    cfg.validate()?;
    let full;
    let mask = match mask {
        Some(m) => m,
        None => {
            full = Mask::full(img.width(), img.height());
            &full
        }
    };
    let pixels = masked_pixels(img, mask)?;
    let model = fit_gmm(&pixels, cfg.k, cfg.seed)?;
    let segmentation = segment(&model, &pixels)?;

    let gray = equalize_histogram(&to_grayscale(img));
    let keypoints = extract_sift(&gray, Some(mask), &cfg.sift)?;
    let labels = segmentation.label_map();
    let width = img.width();
    let keypoint_components = keypoints
        .iter()
        .map(|k| {
            let label = labels[k.y.round() as usize * width + k.x.round() as usize];
            debug_assert_ne!(label, OUTSIDE_MASK, "keypoints are already restricted to the mask");
            label as usize
        })
        .collect();
    debug!(
        "prepared {}x{}: {} pixels, {} components, {} keypoints",
        img.width(),
        img.height(),
        pixels.len(),
        model.len(),
        keypoints.len()
    );
    Ok(PreparedImage {
        pixels,
        model,
        segmentation,
        keypoints,
        keypoint_components,
    })
}

/// Gates `prep` against `reference` (its own model when `None`) and fuses the
/// keypoints of the kept regions. In prior mode every keypoint belongs to one
/// whole-crop region.
pub fn build_template(
    prep: &PreparedImage,
    subject_id: &str,
    reference: Option<&MixtureModel>,
    cfg: &Config,
) -> Result<Enrollment> {
    match cfg.mode {
        SegmentationMode::Prior => {
            let region = RegionKeypoints {
                region_index: WHOLE_CROP_REGION,
                keypoints: prep.keypoints.clone(),
            };
            Ok(Enrollment {
                template: fuse_template(&[region], subject_id, &prep.model)?,
                segmentation: None,
            })
        }
        SegmentationMode::After => {
            let reference = reference.unwrap_or(&prep.model);
            let gated = gate_regions(&prep.segmentation, reference, cfg.tau_kl, cfg.w_min)?;
            let regions: Vec<RegionKeypoints> = gated
                .kept_regions()
                .map(|r| RegionKeypoints {
                    region_index: r.component_index,
                    keypoints: prep
                        .keypoints
                        .iter()
                        .zip(&prep.keypoint_components)
                        .filter(|(_, &c)| c == r.component_index)
                        .map(|(k, _)| k.clone())
                        .collect(),
                })
                .collect();
            Ok(Enrollment {
                template: fuse_template(&regions, subject_id, &prep.model)?,
                segmentation: Some(gated),
            })
        }
    }
}

/// [`prepare`] followed by [`build_template`].
pub fn enroll(
    img: &ColorImage,
    mask: Option<&Mask>,
    subject_id: &str,
    reference: Option<&MixtureModel>,
    cfg: &Config,
) -> Result<Enrollment> {
    build_template(&prepare(img, mask, cfg)?, subject_id, reference, cfg)
}
