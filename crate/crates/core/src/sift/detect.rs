//! Scale-space extrema and their sub-pixel localization.

use nalgebra::{Matrix3, Vector3};

use super::scale_space::{Plane, ScaleSpace};
use super::SiftParams;

const MAX_REFINEMENT_STEPS: usize = 5;

/// A discrete DoG extremum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub octave: usize,
    /// DoG level index, `1..=s`.
    pub level: usize,
    pub x: usize,
    pub y: usize,
    pub value: f64,
}

/// Why a candidate did not become a keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    LowContrast,
    EdgeResponse,
    OutsidePyramid,
    NotConverged,
}

/// A refined extremum, before orientation assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizedKeypoint {
    pub octave: usize,
    /// Integer DoG level the refinement settled on.
    pub level: usize,
    /// Refined position in octave pixel coordinates.
    pub octave_x: f64,
    pub octave_y: f64,
    /// Blur relative to the octave grid, `sigma0 * 2^((level + offset) / s)`.
    pub octave_sigma: f64,
    /// Position and scale in input image pixels.
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    /// Interpolated DoG value.
    pub response: f64,
}

/// Samples strictly above (or strictly below) all 26 neighbours, away from
/// the outer pixel ring and the first/last DoG level, with
/// `|value| > 0.5 * contrast_threshold`.
pub fn detect_extrema(ss: &ScaleSpace, params: &SiftParams) -> Vec<Candidate> {
    let prefilter = 0.5 * params.contrast_threshold;
    let mut out = Vec::new();
    for (o, oct) in ss.octaves.iter().enumerate() {
        let (w, h) = (oct.width(), oct.height());
        if w < 3 || h < 3 {
            continue;
        }
        for level in 1..oct.dogs.len() - 1 {
            let (below, here, above) = (&oct.dogs[level - 1], &oct.dogs[level], &oct.dogs[level + 1]);
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = here.at(x, y);
                    if v.abs() <= prefilter {
                        continue;
                    }
                    if is_strict_extremum(v, [below, here, above], x, y) {
                        out.push(Candidate {
                            octave: o,
                            level,
                            x,
                            y,
                            value: v,
                        });
                    }
                }
            }
        }
    }
    out
}

fn is_strict_extremum(v: f64, planes: [&Plane; 3], x: usize, y: usize) -> bool {
    let mut greater = true;
    let mut less = true;
    for (pi, p) in planes.iter().enumerate() {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if pi == 1 && nx == x && ny == y {
                    continue;
                }
                let n = p.at(nx, ny);
                greater &= v > n;
                less &= v < n;
                if !greater && !less {
                    return false;
                }
            }
        }
    }
    greater || less
}

struct Derivatives {
    gradient: Vector3<f64>,
    hessian: Matrix3<f64>,
}

/// Central differences in (x, y, level) at an integer sample.
fn derivatives(dogs: &[Plane], level: usize, x: usize, y: usize) -> Derivatives {
    let (p, c, n) = (&dogs[level - 1], &dogs[level], &dogs[level + 1]);
    let v = c.at(x, y);
    let dx = 0.5 * (c.at(x + 1, y) - c.at(x - 1, y));
    let dy = 0.5 * (c.at(x, y + 1) - c.at(x, y - 1));
    let ds = 0.5 * (n.at(x, y) - p.at(x, y));
    let dxx = c.at(x + 1, y) + c.at(x - 1, y) - 2.0 * v;
    let dyy = c.at(x, y + 1) + c.at(x, y - 1) - 2.0 * v;
    let dss = n.at(x, y) + p.at(x, y) - 2.0 * v;
    let dxy = 0.25 * (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1));
    let dxs = 0.25 * (n.at(x + 1, y) - n.at(x - 1, y) - p.at(x + 1, y) + p.at(x - 1, y));
    let dys = 0.25 * (n.at(x, y + 1) - n.at(x, y - 1) - p.at(x, y + 1) + p.at(x, y - 1));
    Derivatives {
        gradient: Vector3::new(dx, dy, ds),
        hessian: Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss),
    }
}

/// Quadratic (Taylor) refinement of a candidate followed by the contrast and
/// edge-response tests.
pub fn localize_keypoint(
    candidate: &Candidate,
    ss: &ScaleSpace,
    params: &SiftParams,
) -> Result<LocalizedKeypoint, Rejection> {
    let oct = &ss.octaves[candidate.octave];
    let dogs = &oct.dogs;
    let s = ss.scales_per_octave;
    let (w, h) = (oct.width() as isize, oct.height() as isize);
    let (mut x, mut y, mut level) = (candidate.x as isize, candidate.y as isize, candidate.level as isize);

    let mut settled = None;
    for _ in 0..MAX_REFINEMENT_STEPS {
        let d = derivatives(dogs, level as usize, x as usize, y as usize);
        // a singular Hessian (e.g. along a perfectly straight edge) gives no refinement
        let offset = d
            .hessian
            .try_inverse()
            .map(|inv| -(inv * d.gradient))
            .unwrap_or_else(Vector3::zeros);
        if offset.iter().all(|o| o.abs() <= 0.5) {
            settled = Some((offset, d));
            break;
        }
        if offset.iter().any(|o| !o.is_finite() || o.abs() > (w + h) as f64) {
            return Err(Rejection::OutsidePyramid);
        }
        x += offset[0].round() as isize;
        y += offset[1].round() as isize;
        level += offset[2].round() as isize;
        if level < 1 || level > s as isize || x < 1 || x >= w - 1 || y < 1 || y >= h - 1 {
            return Err(Rejection::OutsidePyramid);
        }
    }
    let (offset, d) = settled.ok_or(Rejection::NotConverged)?;
    let (xu, yu, lu) = (x as usize, y as usize, level as usize);

    let response = dogs[lu].at(xu, yu) + 0.5 * d.gradient.dot(&offset);
    if response.abs() < params.contrast_threshold / s as f64 {
        return Err(Rejection::LowContrast);
    }

    let (dxx, dyy, dxy) = (d.hessian[(0, 0)], d.hessian[(1, 1)], d.hessian[(0, 1)]);
    let trace = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = params.edge_ratio;
    if det <= 0.0 || trace * trace / det >= (r + 1.0) * (r + 1.0) / r {
        return Err(Rejection::EdgeResponse);
    }

    let octave_x = x as f64 + offset[0];
    let octave_y = y as f64 + offset[1];
    let octave_sigma = ss.level_sigma(level as f64 + offset[2]);
    let factor = ss.coordinate_scale(candidate.octave);
    Ok(LocalizedKeypoint {
        octave: candidate.octave,
        level: lu,
        octave_x,
        octave_y,
        octave_sigma,
        x: octave_x * factor,
        y: octave_y * factor,
        scale: octave_sigma * factor,
        response,
    })
}
