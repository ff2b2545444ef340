//! Raster types, decoding, grayscale conversion, histogram equalization and
//! the masked color samples consumed by clustering.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "color image buffer has {} pixels, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidParameter(
                "color channels must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel, clamping channels to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let [r, g, b] = f(x, y);
                data.push([r.clamp(0.0, 1.0), g.clamp(0.0, 1.0), b.clamp(0.0, 1.0)]);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    /// 8-bit quantization used by the encoders.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .flat_map(|px| px.map(quantize_channel))
            .collect()
    }
}

/// Row-major intensity image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "gray image buffer has {} pixels, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(
                "intensities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)`, clamping to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Per-pixel membership of the cropped ear region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "mask has {} bits, expected {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// All-true mask, the default when no mask file is supplied.
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Membership test for a real-valued location, rounded to the nearest pixel.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        let xi = x.round();
        let yi = y.round();
        if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
            return false;
        }
        self.get(xi as usize, yi as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub x: usize,
    pub y: usize,
    pub color: [f64; 3],
}

/// The masked color samples, in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelSet {
    width: usize,
    height: usize,
    samples: Vec<PixelSample>,
}

impl PixelSet {
    /// Wraps raw samples; used by tests and callers that synthesize color data.
    pub fn from_colors(colors: &[[f64; 3]]) -> Self {
        let samples = colors
            .iter()
            .enumerate()
            .map(|(i, &color)| PixelSample { x: i, y: 0, color })
            .collect();
        Self {
            width: colors.len(),
            height: 1,
            samples,
        }
    }

    pub fn samples(&self) -> &[PixelSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Dimensions of the image the samples were taken from.
    pub fn source_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn colors(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.samples.iter().map(|s| s.color)
    }
}

fn quantize_channel(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = read_bytes(path)?;
    let format = image::guess_format(&bytes)
        .map_err(|_| Error::UnsupportedFormat(format!("{}: unrecognized signature", path.display())))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {:?} is not PNG or PNM",
            path.display(),
            format
        )));
    }
    image::load_from_memory_with_format(&bytes, format)
        .map_err(|e| Error::CorruptData(format!("{}: {e}", path.display())))
}

/// Loads a PNG or binary PNM file; 8-bit value `v` maps to `v / 255`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ColorImage> {
    let img = decode(path.as_ref())?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => img
            .to_rgb8()
            .pixels()
            .map(|p| p.0.map(|c| f64::from(c) / 255.0))
            .collect(),
        _ => img
            .to_rgb16()
            .pixels()
            .map(|p| p.0.map(|c| f64::from(c) / 65535.0))
            .collect(),
    };
    ColorImage::new(width, height, data)
}

/// Loads a mask image (PGM or gray PNG); values `>= 128` are inside the mask.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img = decode(path.as_ref())?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Mask::new(w, h, img.pixels().map(|p| p.0[0] >= 128).collect())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes a binary PPM (P6).
pub fn save_ppm(img: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    write_file(path.as_ref(), &out)
}

/// Writes a binary PGM (P5) from raw 8-bit values.
pub fn save_pgm(width: usize, height: usize, values: &[u8], path: impl AsRef<Path>) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::InvalidParameter("PGM buffer size mismatch".into()));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(values);
    write_file(path.as_ref(), &out)
}

pub fn save_png(img: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.to_bytes())
        .expect("buffer length matches dimensions");
    let mut bytes = Vec::new();
    buf.write_to(&mut std::io::Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|e| Error::CorruptData(format!("png encode: {e}")))?;
    write_file(path, &bytes)
}

/// Rec. 601 luma.
pub fn to_grayscale(img: &ColorImage) -> GrayImage {
    let data = img
        .data
        .iter()
        .map(|[r, g, b]| (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// 256-bin histogram equalization with the `cdf_min` correction.
///
/// Images whose CDF is degenerate (a single occupied bin) are returned unchanged.
pub fn equalize_histogram(img: &GrayImage) -> GrayImage {
    let bin_of = |v: f64| quantize_channel(v) as usize;
    let mut hist = [0usize; 256];
    for &v in &img.data {
        hist[bin_of(v)] += 1;
    }
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let n = img.data.len();
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if n <= cdf_min {
        return img.clone();
    }
    let denom = (n - cdf_min) as f64;
    let data = img
        .data
        .iter()
        .map(|&v| ((cdf[bin_of(v)] - cdf_min) as f64 / denom).clamp(0.0, 1.0))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Color samples inside `mask`, in row-major order.
pub fn masked_pixels(img: &ColorImage, mask: &Mask) -> Result<PixelSet> {
    if (img.width, img.height) != (mask.width, mask.height) {
        return Err(Error::DimensionMismatch {
            expected: (img.width, img.height),
            actual: (mask.width, mask.height),
        });
    }
    let samples: Vec<PixelSample> = (0..img.height)
        .flat_map(|y| (0..img.width).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y))
        .map(|(x, y)| PixelSample {
            x,
            y,
            color: img.get(x, y),
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(PixelSet {
        width: img.width,
        height: img.height,
        samples,
    })
}
