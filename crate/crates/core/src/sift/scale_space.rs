//! Gaussian and difference-of-Gaussian pyramids.

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

use super::SiftParams;

/// Blur already present in a camera image, in input pixels.
pub const ASSUMED_INPUT_BLUR: f64 = 0.5;
/// Smallest base image accepted by [`build_scale_space`].
pub const MIN_BASE_SIZE: usize = 16;

/// A real-valued image plane (DoG values may be negative).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Self::new(img.width(), img.height(), img.data().to_vec())
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn sub(&self, other: &Plane) -> Plane {
        Plane::new(
            self.width,
            self.height,
            self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        )
    }
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Normalised sampled Gaussian with radius `ceil(4 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return src.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (src.width, src.height);

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect(x as isize + k as isize - radius, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, kv) in kernel.iter().enumerate() {
            let sy = reflect(y as isize + k as isize - radius, h);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    Plane::new(w, h, out)
}

/// Bilinear 2x upsampling; output pixel `i` samples input position `i / 2`.
pub fn upsample2(src: &Plane) -> Plane {
    let (w, h) = (src.width, src.height);
    let (ow, oh) = (2 * w, 2 * h);
    let mut out = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        let fy = oy as f64 / 2.0;
        let y0 = (fy.floor() as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..ow {
            let fx = ox as f64 / 2.0;
            let x0 = (fx.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            let top = src.at(x0, y0) * (1.0 - tx) + src.at(x1, y0) * tx;
            let bottom = src.at(x0, y1) * (1.0 - tx) + src.at(x1, y1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    Plane::new(ow, oh, out)
}

/// Keeps every second pixel; output is `ceil(w / 2) x ceil(h / 2)`.
pub fn downsample2(src: &Plane) -> Plane {
    let (ow, oh) = (src.width.div_ceil(2), src.height.div_ceil(2));
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            out.push(src.at(2 * x, 2 * y));
        }
    }
    Plane::new(ow, oh, out)
}

#[derive(Debug, Clone)]
pub struct Octave {
    /// `s + 3` Gaussian levels.
    pub gaussians: Vec<Plane>,
    /// `s + 2` difference levels, `dogs[i] = gaussians[i + 1] - gaussians[i]`.
    pub dogs: Vec<Plane>,
}

impl Octave {
    pub fn width(&self) -> usize {
        self.gaussians[0].width
    }

    pub fn height(&self) -> usize {
        self.gaussians[0].height
    }
}

#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub octaves: Vec<Octave>,
    pub scales_per_octave: usize,
    pub base_sigma: f64,
    /// Whether octave 0 is the 2x upsampled input.
    pub upsampled: bool,
}

impl ScaleSpace {
    /// Factor from octave-`o` pixel coordinates to input image coordinates.
    pub fn coordinate_scale(&self, octave: usize) -> f64 {
        let base = if self.upsampled { 0.5 } else { 1.0 };
        base * (1u64 << octave) as f64
    }

    /// Blur of level `level` relative to its own octave's sampling grid.
    pub fn level_sigma(&self, level: f64) -> f64 {
        self.base_sigma * 2f64.powf(level / self.scales_per_octave as f64)
    }
}

/// Builds `s + 3` Gaussian levels per octave at `sigma0 * 2^(i/s)` and their
/// adjacent differences. Each next octave starts from the level at twice the
/// base blur, decimated by two.
pub fn build_scale_space(img: &GrayImage, params: &SiftParams) -> Result<ScaleSpace> {
    params.validate()?;
    let mut base = Plane::from_gray(img);
    let mut input_blur = ASSUMED_INPUT_BLUR;
    if params.initial_upsample {
        base = upsample2(&base);
        input_blur *= 2.0;
    }
    if base.width < MIN_BASE_SIZE || base.height < MIN_BASE_SIZE {
        return Err(Error::ImageTooSmall {
            width: base.width,
            height: base.height,
        });
    }

    let s = params.scales_per_octave;
    let sigma0 = params.base_sigma;
    let n_octaves = if params.octaves == 0 {
        let min_dim = base.width.min(base.height) as f64;
        (min_dim.log2().floor() as usize).saturating_sub(2).max(1)
    } else {
        params.octaves
    };
    let sigmas: Vec<f64> = (0..s + 3)
        .map(|i| sigma0 * 2f64.powf(i as f64 / s as f64))
        .collect();
    let increments: Vec<f64> = sigmas
        .windows(2)
        .map(|w| (w[1] * w[1] - w[0] * w[0]).sqrt())
        .collect();

    let pre_blur = (sigma0 * sigma0 - input_blur * input_blur).max(0.0).sqrt();
    let mut seed = gaussian_blur(&base, pre_blur);
    let mut octaves = Vec::with_capacity(n_octaves);
    for o in 0..n_octaves {
        if o > 0 && (seed.width < 3 || seed.height < 3) {
            break;
        }
        let mut gaussians = Vec::with_capacity(s + 3);
        gaussians.push(seed);
        for inc in &increments {
            let next = gaussian_blur(gaussians.last().expect("non-empty"), *inc);
            gaussians.push(next);
        }
        let dogs = gaussians.windows(2).map(|w| w[1].sub(&w[0])).collect();
        seed = downsample2(&gaussians[s]);
        octaves.push(Octave { gaussians, dogs });
    }

    Ok(ScaleSpace {
        octaves,
        scales_per_octave: s,
        base_sigma: sigma0,
        upsampled: params.initial_upsample,
    })
}
