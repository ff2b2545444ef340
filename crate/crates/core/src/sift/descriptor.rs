//! 4x4x8 gradient-histogram descriptors.

use std::f64::consts::TAU;

use super::orientation::{gradient, OrientedKeypoint};
use super::scale_space::ScaleSpace;
use super::{Descriptor, SiftParams};

pub const DESCRIPTOR_GRID: usize = 4;
pub const DESCRIPTOR_BINS: usize = 8;
pub const DESCRIPTOR_LEN: usize = DESCRIPTOR_GRID * DESCRIPTOR_GRID * DESCRIPTOR_BINS;

/// Width of one spatial cell in units of the keypoint's octave blur.
const CELL_SIGMAS: f64 = 3.0;

/// Gradients around the keypoint are rotated by `-orientation`, weighted by a
/// Gaussian of half the window width and spread trilinearly over 4x4 cells and
/// 8 orientation bins. The result is normalized, clamped and normalized again.
/// Returns `None` when the window holds no gradient at all.
pub fn compute_descriptor(okp: &OrientedKeypoint, ss: &ScaleSpace, params: &SiftParams) -> Option<Descriptor> {
    let kp = &okp.keypoint;
    let g = &ss.octaves[kp.octave].gaussians[kp.level];
    let d = DESCRIPTOR_GRID as isize;
    let cell = CELL_SIGMAS * kp.octave_sigma;
    let radius = (cell * std::f64::consts::SQRT_2 * (d as f64 + 1.0) * 0.5).round() as isize;
    let (cos_t, sin_t) = (okp.orientation.cos(), okp.orientation.sin());
    let half = DESCRIPTOR_GRID as f64 / 2.0;
    let weight_denom = 2.0 * half * half;
    let bins_per_rad = DESCRIPTOR_BINS as f64 / TAU;
    let (cx, cy) = (kp.octave_x.round() as isize, kp.octave_y.round() as isize);

    // padded by one cell on each side so the trilinear spill needs no bounds checks
    let side = DESCRIPTOR_GRID + 2;
    let mut hist = vec![0.0; side * side * DESCRIPTOR_BINS];
    for py in cy - radius..=cy + radius {
        if py < 1 || py >= g.height as isize - 1 {
            continue;
        }
        for px in cx - radius..=cx + radius {
            if px < 1 || px >= g.width as isize - 1 {
                continue;
            }
            let (dx, dy) = (px as f64 - kp.octave_x, py as f64 - kp.octave_y);
            let u = (dx * cos_t + dy * sin_t) / cell;
            let v = (-dx * sin_t + dy * cos_t) / cell;
            let rbin = v + half - 0.5;
            let cbin = u + half - 0.5;
            if rbin <= -1.0 || rbin >= d as f64 || cbin <= -1.0 || cbin >= d as f64 {
                continue;
            }
            let (gx, gy) = gradient(g, px as usize, py as usize);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let obin = (gy.atan2(gx) - okp.orientation).rem_euclid(TAU) * bins_per_rad;
            let w = mag * (-(u * u + v * v) / weight_denom).exp();
            spread(&mut hist, side, rbin, cbin, obin, w);
        }
    }

    let mut out = [0.0; DESCRIPTOR_LEN];
    for r in 0..DESCRIPTOR_GRID {
        for c in 0..DESCRIPTOR_GRID {
            let src = ((r + 1) * side + c + 1) * DESCRIPTOR_BINS;
            let dst = (r * DESCRIPTOR_GRID + c) * DESCRIPTOR_BINS;
            out[dst..dst + DESCRIPTOR_BINS].copy_from_slice(&hist[src..src + DESCRIPTOR_BINS]);
        }
    }
    normalize(&mut out)?;
    out.iter_mut().for_each(|v| *v = v.min(params.descriptor_clamp));
    normalize(&mut out)?;
    Some(Descriptor(out))
}

/// Trilinear interpolation into the padded `(side x side x bins)` histogram.
fn spread(hist: &mut [f64], side: usize, rbin: f64, cbin: f64, obin: f64, w: f64) {
    let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
    let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
    // shift by one for the padding ring
    let (r0, c0) = ((r0 as isize + 1) as usize, (c0 as isize + 1) as usize);
    let o0 = o0 as usize % DESCRIPTOR_BINS;
    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
            let base = ((r0 + dr) * side + c0 + dc) * DESCRIPTOR_BINS;
            let cell_w = w * wr * wc;
            hist[base + o0] += cell_w * (1.0 - fo);
            hist[base + (o0 + 1) % DESCRIPTOR_BINS] += cell_w * fo;
        }
    }
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}
