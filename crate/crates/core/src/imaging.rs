//! Grayscale ingestion, bilinear resizing, normalization and the Canny
//! edge detector.

use std::collections::VecDeque;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};
use ndarray::Array2;
use thiserror::Error;

use crate::io_util::write_atomic;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("cannot read image {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode image {path}: {msg}")]
    Decode { path: PathBuf, msg: String },
    #[error("unsupported pixel format {format} in {path} (expected 8-bit gray or 8-bit RGB)")]
    Unsupported { path: PathBuf, format: String },
    #[error("image has a zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("image {width}x{height} is smaller than the {min}x{min} kernel")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("invalid threshold pair: need 0 <= low < high, got ({low}, {high})")]
    InvalidThresholds { low: f64, high: f64 },
    #[error("cannot encode image: {0}")]
    Encode(String),
}

pub type Result<T, E = ImagingError> = std::result::Result<T, E>;

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage8 {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage8 {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImagingError::ZeroDimension { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImagingError::BufferSize {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with edge replication outside the image.
    #[inline]
    fn get_replicated(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    /// Encodes the image as an 8-bit grayscale PNG.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let buf =
            image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
                .ok_or_else(|| ImagingError::Encode("buffer size".into()))?;
        let mut out = Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(buf)
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| ImagingError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.to_png_bytes()?;
        write_atomic(path, &bytes).map_err(|source| ImagingError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Image with real-valued pixels in `[-1, 1]`; rows are image rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage<T> {
    values: Array2<T>,
}

impl<T: Scalar> NormalizedImage<T> {
    pub fn from_array(values: Array2<T>) -> Self {
        Self { values }
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn into_values(self) -> Array2<T> {
        self.values
    }

    /// Inverse of [`normalize`]: `round((v/2 + 1/2) * 255)`, clamped to 8 bits.
    pub fn denormalize(&self) -> GrayImage8 {
        let half = T::of(0.5);
        let pixels = self
            .values
            .iter()
            .map(|&v| {
                let p = ((v * half + half) * T::of(255.0)).round().to_f64_lossy();
                p.clamp(0.0, 255.0) as u8
            })
            .collect();
        GrayImage8 {
            width: self.width(),
            height: self.height(),
            pixels,
        }
    }
}

/// Binary edge map produced by [`canny`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    edges: Vec<bool>,
}

impl EdgeMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn edges(&self) -> &[bool] {
        &self.edges
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.edges[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    /// Edge pixels as 1, background as 0.
    pub fn to_real<T: Scalar>(&self) -> Array2<T> {
        Array2::from_shape_fn((self.height, self.width), |(y, x)| {
            if self.get(x, y) {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    pub fn to_gray(&self) -> GrayImage8 {
        GrayImage8 {
            width: self.width,
            height: self.height,
            pixels: self
                .edges
                .iter()
                .map(|&e| if e { 255 } else { 0 })
                .collect(),
        }
    }
}

/// Low/high gradient-magnitude thresholds for Canny double thresholding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPair {
    low: f64,
    high: f64,
}

impl ThresholdPair {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && 0.0 <= low && low < high) {
            return Err(ImagingError::InvalidThresholds { low, high });
        }
        Ok(Self { low, high })
    }

    const fn fixed(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    /// Short tag such as `50-150`, used in file names.
    pub fn tag(&self) -> String {
        format!("{}-{}", self.low, self.high)
    }
}

/// The three fixed threshold pairs, from most to least permissive.
pub const CANNY_PAIRS: [ThresholdPair; 3] = [
    ThresholdPair::fixed(50.0, 150.0),
    ThresholdPair::fixed(100.0, 200.0),
    ThresholdPair::fixed(150.0, 250.0),
];

/// Loads an 8-bit grayscale or 8-bit RGB raster. RGB is reduced with the
/// 0.299/0.587/0.114 luma weights.
pub fn load_grayscale(path: &Path) -> Result<GrayImage8> {
    let reader = image::ImageReader::open(path)
        .map_err(|source| ImagingError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| ImagingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => ImagingError::Unsupported {
            path: path.to_path_buf(),
            format: u.to_string(),
        },
        other => ImagingError::Decode {
            path: path.to_path_buf(),
            msg: other.to_string(),
        },
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if w == 0 || h == 0 {
        return Err(ImagingError::ZeroDimension {
            width: w,
            height: h,
        });
    }
    match decoded {
        DynamicImage::ImageLuma8(buf) => GrayImage8::new(w, h, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => {
            let pixels = buf
                .pixels()
                .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
                .collect();
            GrayImage8::new(w, h, pixels)
        }
        other => Err(ImagingError::Unsupported {
            path: path.to_path_buf(),
            format: format!("{:?}", other.color()),
        }),
    }
}

#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

/// Bilinear resize with pixel-center alignment: output index `i` samples
/// source coordinate `(i + 0.5) * in / out - 0.5`, clamped to the image.
pub fn resize_bilinear(img: &GrayImage8, out_w: usize, out_h: usize) -> Result<GrayImage8> {
    if out_w == 0 || out_h == 0 {
        return Err(ImagingError::ZeroDimension {
            width: out_w,
            height: out_h,
        });
    }
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let xs = sample_positions(img.width, out_w);
    let ys = sample_positions(img.height, out_h);
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = f64::from(img.get(x0, y0)) * (1.0 - fx) + f64::from(img.get(x1, y0)) * fx;
            let bottom = f64::from(img.get(x0, y1)) * (1.0 - fx) + f64::from(img.get(x1, y1)) * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage8::new(out_w, out_h, pixels)
}

fn sample_positions(len_in: usize, len_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = len_in as f64 / len_out as f64;
    let max = (len_in - 1) as f64;
    (0..len_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(len_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Maps 8-bit pixels to `[-1, 1]` via `(p/255 - 0.5) / 0.5`.
pub fn normalize<T: Scalar>(img: &GrayImage8) -> NormalizedImage<T> {
    let half = T::of(0.5);
    let full = T::of(255.0);
    let values = Array2::from_shape_fn((img.height, img.width), |(y, x)| {
        (T::of(f64::from(img.get(x, y))) / full - half) / half
    });
    NormalizedImage { values }
}

pub const GAUSSIAN_SIZE: usize = 5;
pub const GAUSSIAN_SIGMA: f64 = 1.4;

/// The 5x5, sigma 1.4 Gaussian kernel, normalized to unit sum; row-major.
pub fn gaussian_kernel() -> [[f64; GAUSSIAN_SIZE]; GAUSSIAN_SIZE] {
    let r = (GAUSSIAN_SIZE / 2) as isize;
    let mut k = [[0.0; GAUSSIAN_SIZE]; GAUSSIAN_SIZE];
    let mut sum = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * GAUSSIAN_SIGMA * GAUSSIAN_SIGMA)).exp();
            k[(dy + r) as usize][(dx + r) as usize] = v;
            sum += v;
        }
    }
    for row in k.iter_mut() {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    k
}

fn check_min_size(img: &GrayImage8) -> Result<()> {
    if img.width < GAUSSIAN_SIZE || img.height < GAUSSIAN_SIZE {
        return Err(ImagingError::TooSmall {
            width: img.width,
            height: img.height,
            min: GAUSSIAN_SIZE,
        });
    }
    Ok(())
}

/// Gaussian blur with edge replication; output rounded to the nearest integer.
pub fn gaussian_blur(img: &GrayImage8) -> Result<GrayImage8> {
    check_min_size(img)?;
    let k = gaussian_kernel();
    let r = (GAUSSIAN_SIZE / 2) as isize;
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            let mut acc = 0.0;
            for (ky, row) in k.iter().enumerate() {
                for (kx, &w) in row.iter().enumerate() {
                    let sx = x + kx as isize - r;
                    let sy = y + ky as isize - r;
                    acc += w * f64::from(img.get_replicated(sx, sy));
                }
            }
            pixels.push(acc.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage8::new(img.width, img.height, pixels)
}

/// Gradient direction quantized to the four NMS axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl Direction {
    fn from_gradient(gx: f64, gy: f64) -> Self {
        let mut angle = gy.atan2(gx).to_degrees();
        if angle < 0.0 {
            angle += 180.0;
        }
        if !(22.5..157.5).contains(&angle) {
            Direction::Deg0
        } else if angle < 67.5 {
            Direction::Deg45
        } else if angle < 112.5 {
            Direction::Deg90
        } else {
            Direction::Deg135
        }
    }

    /// Offset to one of the two neighbors along the gradient (y grows down).
    fn offset(self) -> (isize, isize) {
        match self {
            Direction::Deg0 => (1, 0),
            Direction::Deg45 => (1, 1),
            Direction::Deg90 => (0, 1),
            Direction::Deg135 => (-1, 1),
        }
    }
}

/// Every intermediate product of one Canny run.
#[derive(Debug, Clone)]
pub struct CannyStages {
    pub blurred: GrayImage8,
    pub magnitude: Vec<f64>,
    pub direction: Vec<Direction>,
    /// Pixels surviving non-maximum suppression.
    pub nms_keep: Vec<bool>,
    pub strong: Vec<bool>,
    pub weak: Vec<bool>,
    pub edges: EdgeMap,
}

impl CannyStages {
    /// Magnitude after suppression (zero where suppressed).
    pub fn suppressed(&self) -> Vec<f64> {
        self.magnitude
            .iter()
            .zip(&self.nms_keep)
            .map(|(&m, &k)| if k { m } else { 0.0 })
            .collect()
    }

    /// Writes `<stem>_blur.png`, `<stem>_mag.png`, `<stem>_nms.png` and
    /// `<stem>_edges.png` into `dir`. Magnitudes are rescaled to 0..255.
    pub fn write_debug(&self, dir: &Path, stem: &str) -> Result<()> {
        let (w, h) = (self.blurred.width, self.blurred.height);
        let scaled = |values: &[f64]| -> Result<GrayImage8> {
            let max = values.iter().cloned().fold(0.0_f64, f64::max);
            let pixels = values
                .iter()
                .map(|&v| {
                    if max > 0.0 {
                        (v / max * 255.0).round() as u8
                    } else {
                        0
                    }
                })
                .collect();
            GrayImage8::new(w, h, pixels)
        };
        self.blurred
            .save_png(&dir.join(format!("{stem}_blur.png")))?;
        scaled(&self.magnitude)?.save_png(&dir.join(format!("{stem}_mag.png")))?;
        scaled(&self.suppressed())?.save_png(&dir.join(format!("{stem}_nms.png")))?;
        self.edges
            .to_gray()
            .save_png(&dir.join(format!("{stem}_edges.png")))
    }
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Runs the full Canny detector and keeps every stage.
pub fn canny_stages(img: &GrayImage8, t: ThresholdPair) -> Result<CannyStages> {
    ThresholdPair::new(t.low, t.high)?;
    let blurred = gaussian_blur(img)?;
    let (w, h) = (img.width, img.height);
    let n = w * h;

    let mut magnitude = Vec::with_capacity(n);
    let mut direction = Vec::with_capacity(n);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut gx, mut gy) = (0.0, 0.0);
            for ky in 0..3 {
                for kx in 0..3 {
                    let p =
                        f64::from(blurred.get_replicated(x + kx as isize - 1, y + ky as isize - 1));
                    gx += SOBEL_X[ky][kx] * p;
                    gy += SOBEL_Y[ky][kx] * p;
                }
            }
            magnitude.push((gx * gx + gy * gy).sqrt());
            direction.push(Direction::from_gradient(gx, gy));
        }
    }

    let mag_at = |x: isize, y: isize| -> f64 {
        let cx = x.clamp(0, w as isize - 1) as usize;
        let cy = y.clamp(0, h as isize - 1) as usize;
        magnitude[cy * w + cx]
    };
    let mut nms_keep = vec![false; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (dx, dy) = direction[i].offset();
            let (xi, yi) = (x as isize, y as isize);
            let m = magnitude[i];
            nms_keep[i] = m >= mag_at(xi + dx, yi + dy) && m >= mag_at(xi - dx, yi - dy);
        }
    }

    let strong: Vec<bool> = (0..n)
        .map(|i| nms_keep[i] && magnitude[i] >= t.high)
        .collect();
    let weak: Vec<bool> = (0..n)
        .map(|i| nms_keep[i] && magnitude[i] >= t.low && magnitude[i] < t.high)
        .collect();

    let mut edges = strong.clone();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| strong[i]).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if weak[j] && !edges[j] {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }

    Ok(CannyStages {
        blurred,
        magnitude,
        direction,
        nms_keep,
        strong,
        weak,
        edges: EdgeMap {
            width: w,
            height: h,
            edges,
        },
    })
}

/// Canny edge detector: blur, Sobel, NMS, double threshold, hysteresis.
pub fn canny(img: &GrayImage8, t: ThresholdPair) -> Result<EdgeMap> {
    canny_stages(img, t).map(|s| s.edges)
}

/// Edge maps for the three fixed threshold pairs, in [`CANNY_PAIRS`] order.
pub fn canny_multi(img: &GrayImage8) -> Result<[EdgeMap; 3]> {
    let [a, b, c] = CANNY_PAIRS;
    Ok([canny(img, a)?, canny(img, b)?, canny(img, c)?])
}
