//! Image decoding, CIELAB conversion, nearest-neighbour resizing and
//! grayscale map I/O.

use std::path::Path;
use std::sync::OnceLock;

use image::{GrayImage, ImageFormat, ImageReader};

use crate::error::{HcaError, Result};

/// 8-bit sRGB image, row-major RGB triples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(HcaError::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(HcaError::Format(format!(
                "rgb buffer has {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(RgbImage { width, height, data })
    }

    /// Image filled with a single colour.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        RgbImage::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// CIELAB image (D65), one `[L, a, b]` triple per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }
}

/// Per-pixel saliency in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(HcaError::InvalidParameter(format!(
                "map dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(HcaError::Format(format!(
                "map has {} values, expected {}",
                values.len(),
                width * height
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(HcaError::InvalidParameter(format!(
                "saliency value {bad} outside [0, 1]"
            )));
        }
        Ok(SaliencyMap { width, height, values })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        SaliencyMap::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// 8-bit quantization used for PNG output and PR evaluation: round half up.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().map(|&v| quantize(v)).collect()
    }
}

/// `round(255 * s)` with halves rounded up.
pub fn quantize(s: f64) -> u8 {
    (255.0 * s + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Nearest-neighbour resampling. Output pixel `x` reads source column
/// `floor((x + 0.5) * src_w / new_w)`, and likewise for rows.
pub trait ResizeNearest: Sized {
    fn resize_nearest(&self, new_width: usize, new_height: usize) -> Self;
}

impl ResizeNearest for SaliencyMap {
    fn resize_nearest(&self, new_width: usize, new_height: usize) -> Self {
        let values = resample(&self.values, self.width, self.height, 1, new_width, new_height);
        SaliencyMap { width: new_width, height: new_height, values }
    }
}

/// Source index for output coordinate `dst` along an axis.
pub fn nearest_source_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    let idx = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize;
    idx.min(src_len - 1)
}

/// Resample an interleaved `channels`-per-pixel buffer.
pub(crate) fn resample<T: Copy>(
    src: &[T],
    src_w: usize,
    src_h: usize,
    channels: usize,
    dst_w: usize,
    dst_h: usize,
) -> Vec<T> {
    assert!(dst_w > 0 && dst_h > 0, "target dimensions must be positive");
    if src_w == dst_w && src_h == dst_h {
        return src.to_vec();
    }
    let cols: Vec<usize> = (0..dst_w).map(|x| nearest_source_index(x, src_w, dst_w)).collect();
    let mut out = Vec::with_capacity(dst_w * dst_h * channels);
    for y in 0..dst_h {
        let sy = nearest_source_index(y, src_h, dst_h);
        let row = &src[sy * src_w * channels..(sy + 1) * src_w * channels];
        for &sx in &cols {
            out.extend_from_slice(&row[sx * channels..(sx + 1) * channels]);
        }
    }
    out
}

/// Decode a PNG or JPEG file into 8-bit RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| HcaError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| HcaError::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        other => {
            return Err(HcaError::Decode {
                path: path.into(),
                message: format!("unsupported format {other:?}; expected PNG or JPEG"),
            })
        }
    }
    let decoded = reader.decode().map_err(|e| HcaError::Decode {
        path: path.into(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(HcaError::Decode { path: path.into(), message: "zero-sized image".into() });
    }
    RgbImage::new(w, h, rgb.into_raw())
}

/// Read an 8-bit grayscale map (colour inputs are converted to luma).
pub fn load_gray_png(path: impl AsRef<Path>) -> Result<SaliencyMap> {
    let path = path.as_ref();
    let decoded = ImageReader::open(path)
        .map_err(|e| HcaError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| HcaError::io(path, e))?
        .decode()
        .map_err(|e| HcaError::Decode { path: path.into(), message: e.to_string() })?;
    let gray = decoded.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let values = gray.into_raw().into_iter().map(|b| f64::from(b) / 255.0).collect();
    SaliencyMap::new(w, h, values)
}

pub fn write_gray_png(map: &SaliencyMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = GrayImage::from_raw(map.width as u32, map.height as u32, map.to_bytes())
        .expect("buffer length matches dimensions");
    img.save_with_format(path, ImageFormat::Png).map_err(|e| save_error(path, e))
}

pub fn write_rgb_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.data.clone())
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| save_error(path, e))
}

fn save_error(path: &Path, e: image::ImageError) -> HcaError {
    match e {
        image::ImageError::IoError(io) => HcaError::io(path, io),
        other => HcaError::io(path, std::io::Error::other(other.to_string())),
    }
}

// sRGB primaries, D65 white.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

fn srgb_to_linear(c: u8) -> f64 {
    let c = f64::from(c) / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_table() -> &'static [f64; 256] {
    static TABLE: OnceLock<[f64; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|i| srgb_to_linear(i as u8)))
}

fn lab_f(t: f64) -> f64 {
    const EPSILON: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

/// Convert one sRGB pixel to CIELAB.
pub fn rgb_pixel_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let table = linear_table();
    let lin = rgb.map(|c| table[c as usize]);
    let xyz: [f64; 3] = std::array::from_fn(|r| {
        RGB_TO_XYZ[r][0] * lin[0] + RGB_TO_XYZ[r][1] * lin[1] + RGB_TO_XYZ[r][2] * lin[2]
    });
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    [l, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn rgb_to_lab(img: &RgbImage) -> LabImage {
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| rgb_pixel_to_lab([p[0], p[1], p[2]]))
        .collect();
    LabImage { width: img.width, height: img.height, data }
}
