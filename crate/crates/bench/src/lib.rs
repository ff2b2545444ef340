//! Shared fixtures for the criterion benches.

use earsift_core::enroll::enroll;
use earsift_core::evaluation::synth::{render_subject, ProbeTransform, SubjectSpec};
use earsift_core::imaging::{equalize_histogram, masked_pixels, to_grayscale};
use earsift_core::{ColorImage, Config, GrayImage, Mask, PixelSet, Template};

pub const SEED: u64 = 42;

pub fn reference_image(subject: usize) -> ColorImage {
    render_subject(&SubjectSpec::new(SEED, subject), None)
}

pub fn probe_image(subject: usize) -> ColorImage {
    let spec = SubjectSpec::new(SEED, subject);
    render_subject(&spec, Some(&ProbeTransform::sample(&spec, 0)))
}

/// Equalized grayscale input as fed to SIFT.
pub fn sift_input(img: &ColorImage) -> GrayImage {
    equalize_histogram(&to_grayscale(img))
}

pub fn all_pixels(img: &ColorImage) -> PixelSet {
    masked_pixels(img, &Mask::full(img.width(), img.height())).expect("full mask selects pixels")
}

pub fn template(img: &ColorImage, cfg: &Config) -> Template {
    enroll(img, None, "bench", None, cfg).expect("synthetic images have keypoints").template
}
