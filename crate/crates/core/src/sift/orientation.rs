//! Dominant gradient orientations around a localized keypoint.

use std::f64::consts::TAU;

use super::detect::LocalizedKeypoint;
use super::scale_space::{Plane, ScaleSpace};
use super::SiftParams;

const WINDOW_FACTOR: f64 = 1.5;
const WINDOW_RADIUS_SIGMAS: f64 = 3.0;

/// A localized keypoint with one of its dominant orientations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedKeypoint {
    pub keypoint: LocalizedKeypoint,
    /// Radians in `[0, 2 pi)`.
    pub orientation: f64,
}

/// Central-difference gradient `(gx, gy)` at an interior sample.
#[inline]
pub(super) fn gradient(g: &Plane, x: usize, y: usize) -> (f64, f64) {
    (g.at(x + 1, y) - g.at(x - 1, y), g.at(x, y + 1) - g.at(x, y - 1))
}

/// Magnitude-weighted orientation histogram over a Gaussian window of
/// `sigma_w = 1.5 * sigma` on the keypoint's Gaussian level.
pub(super) fn orientation_histogram(kp: &LocalizedKeypoint, ss: &ScaleSpace, bins: usize) -> Vec<f64> {
    let g = &ss.octaves[kp.octave].gaussians[kp.level];
    let sigma_w = WINDOW_FACTOR * kp.octave_sigma;
    let radius = (WINDOW_RADIUS_SIGMAS * sigma_w).round() as isize;
    let (cx, cy) = (kp.octave_x.round() as isize, kp.octave_y.round() as isize);
    let denom = 2.0 * sigma_w * sigma_w;

    let mut hist = vec![0.0; bins];
    for py in cy - radius..=cy + radius {
        if py < 1 || py >= g.height as isize - 1 {
            continue;
        }
        for px in cx - radius..=cx + radius {
            if px < 1 || px >= g.width as isize - 1 {
                continue;
            }
            let (dx, dy) = (px as f64 - kp.octave_x, py as f64 - kp.octave_y);
            let (gx, gy) = gradient(g, px as usize, py as usize);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(TAU);
            let bin = (theta * bins as f64 / TAU).round() as usize % bins;
            hist[bin] += mag * (-(dx * dx + dy * dy) / denom).exp();
        }
    }
    smooth_circular(&hist)
}

/// One pass of the circular `[1, 4, 6, 4, 1] / 16` filter.
fn smooth_circular(h: &[f64]) -> Vec<f64> {
    let n = h.len();
    (0..n)
        .map(|i| {
            let at = |d: isize| h[(i as isize + d).rem_euclid(n as isize) as usize];
            (at(-2) + at(2) + 4.0 * (at(-1) + at(1)) + 6.0 * at(0)) / 16.0
        })
        .collect()
}

/// Orientations of histogram peaks within `peak_ratio` of the maximum, each
/// refined by a parabola through the peak bin and its neighbours.
pub(super) fn peak_orientations(hist: &[f64], peak_ratio: f64) -> Vec<f64> {
    let n = hist.len();
    let max = hist.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for k in 0..n {
        let (l, c, r) = (hist[(k + n - 1) % n], hist[k], hist[(k + 1) % n]);
        if c > l && c >= r && c >= peak_ratio * max {
            let curvature = l - 2.0 * c + r;
            let offset = if curvature != 0.0 { 0.5 * (l - r) / curvature } else { 0.0 };
            out.push(((k as f64 + offset) * TAU / n as f64).rem_euclid(TAU));
        }
    }
    out
}

/// One oriented copy of `kp` per dominant orientation.
pub fn assign_orientation(kp: &LocalizedKeypoint, ss: &ScaleSpace, params: &SiftParams) -> Vec<OrientedKeypoint> {
    let hist = orientation_histogram(kp, ss, params.orientation_bins);
    peak_orientations(&hist, params.peak_ratio)
        .into_iter()
        .map(|orientation| OrientedKeypoint {
            keypoint: *kp,
            orientation,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::GrayImage;
    use crate::sift::scale_space::build_scale_space;

    fn params() -> SiftParams {
        SiftParams {
            initial_upsample: false,
            ..SiftParams::default()
        }
    }

    fn keypoint_at(ss: &ScaleSpace, x: f64, y: f64) -> LocalizedKeypoint {
        let level = 1;
        LocalizedKeypoint {
            octave: 0,
            level,
            octave_x: x,
            octave_y: y,
            octave_sigma: ss.level_sigma(level as f64),
            x,
            y,
            scale: ss.level_sigma(level as f64),
            response: 0.1,
        }
    }

    fn orientations_of(img: &GrayImage, x: f64, y: f64) -> Vec<f64> {
        let p = params();
        let ss = build_scale_space(img, &p).unwrap();
        assign_orientation(&keypoint_at(&ss, x, y), &ss, &p)
            .iter()
            .map(|o| o.orientation.to_degrees())
            .collect()
    }

    fn angle_diff(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(360.0);
        d.min(360.0 - d)
    }

    #[test]
    fn horizontal_ramp_points_along_x() {
        let img = GrayImage::from_fn(48, 48, |x, _| 0.1 + 0.015 * x as f64);
        let got = orientations_of(&img, 24.0, 24.0);
        assert_eq!(got.len(), 1, "{got:?}");
        assert!(angle_diff(got[0], 0.0) < 5.0, "{got:?}");
    }

    #[test]
    fn perpendicular_ramps_give_two_orientations() {
        let (c, a) = (24.0, 0.015);
        let img = GrayImage::from_fn(49, 49, |x, y| 0.4 + a * (x as f64 - c).max(y as f64 - c));
        // direct tabulation: the window splits evenly between +x and +y gradients
        let ss = build_scale_space(&img, &params()).unwrap();
        let hist = orientation_histogram(&keypoint_at(&ss, c, c), &ss, 36);
        assert!((hist[0] - hist[9]).abs() < 1e-9 * hist[0], "{} vs {}", hist[0], hist[9]);

        let mut got = orientations_of(&img, c, c);
        got.sort_by(f64::total_cmp);
        assert_eq!(got.len(), 2, "{got:?}");
        // the blurred seam along the diagonal pulls both refined peaks slightly towards 45 degrees
        let bin = 10.0;
        assert!(angle_diff(got[0], 0.0) < bin && angle_diff(got[1], 90.0) < bin, "{got:?}");
        assert!((angle_diff(got[0], got[1]) - 90.0).abs() < bin, "{got:?}");
    }

    #[test]
    fn rotating_the_ramp_shifts_orientation() {
        let ramp = |deg: f64| {
            let (s, c) = deg.to_radians().sin_cos();
            GrayImage::from_fn(48, 48, move |x, y| 0.5 + 0.01 * ((x as f64 - 24.0) * c + (y as f64 - 24.0) * s))
        };
        let base = orientations_of(&ramp(0.0), 24.0, 24.0);
        let turned = orientations_of(&ramp(30.0), 24.0, 24.0);
        assert_eq!((base.len(), turned.len()), (1, 1));
        assert!((angle_diff(turned[0], base[0]) - 30.0).abs() < 5.0, "{base:?} {turned:?}");
    }

    #[test]
    fn smoothing_preserves_mass() {
        let h: Vec<f64> = (0..36).map(|i| (i * 7 % 5) as f64).collect();
        let s = smooth_circular(&h);
        assert!((h.iter().sum::<f64>() - s.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn flat_histogram_has_no_peak() {
        assert!(peak_orientations(&[0.0; 36], 0.8).is_empty());
        assert!(peak_orientations(&[1.0; 36], 0.8).is_empty());
    }
}
