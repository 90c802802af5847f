//! Grayscale and binary pixel grids.
//!
//! Images are row-major with `(x, y) = (column, row)` and the origin at the
//! top-left corner. Intensities are `f64`; images read from disk are scaled
//! into `[0, 1]` by the maximum of their bit depth.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel coordinate, `x` is the column and `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub fn new(x: usize, y: usize) -> Self {
        Pixel { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayImage {
    /// Builds an image from row-major values. Fails on a length mismatch or
    /// a non-finite value.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "{} values for a {width}x{height} image",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {i}")));
        }
        Ok(GrayImage {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(value.is_finite());
        GrayImage {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite pixel at ({x}, {y})");
                values.push(v);
            }
        }
        GrayImage {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn pixel_of(&self, index: usize) -> Pixel {
        Pixel::new(index % self.width, index / self.width)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn at(&self, p: Pixel) -> f64 {
        self.get(p.x, p.y)
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        assert!(value.is_finite());
        let i = self.index(x, y);
        self.values[i] = value;
    }

    /// True when every value lies in `[0, 1]`.
    pub fn is_normalized(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| f(self.get(x, y)))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_dims(&self, other: &GrayImage) -> Result<()> {
        check_dims(self.width, self.height, other.width, other.height)
    }

    /// Copies the `w`×`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<GrayImage> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h} at ({x0}, {y0}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        Ok(GrayImage::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }

    pub fn flip_horizontal(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y)
        })
    }

    pub fn flip_vertical(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            self.get(x, self.height - 1 - y)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid(format!(
                "{} bits for a {width}x{height} image",
                bits.len()
            )));
        }
        Ok(BinaryImage {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, bit: bool) -> Self {
        BinaryImage {
            width,
            height,
            bits: vec![bit; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        BinaryImage {
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

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn same_dims(&self, other: &BinaryImage) -> Result<()> {
        check_dims(self.width, self.height, other.width, other.height)
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            if self.get(x, y) {
                1.0
            } else {
                0.0
            }
        })
    }
}

pub(crate) fn check_dims(w0: usize, h0: usize, w1: usize, h1: usize) -> Result<()> {
    if w0 != w1 || h0 != h1 {
        return Err(Error::DimensionMismatch {
            left_w: w0,
            left_h: h0,
            right_w: w1,
            right_h: h1,
        });
    }
    Ok(())
}

/// Reads an 8- or 16-bit grayscale PNG or PGM and scales it into `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Pnm) => {}
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let values: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => {
            return Err(Error::NotGrayscale {
                path: path.to_path_buf(),
                color: format!("{:?}", other.color()),
            })
        }
    };
    if values.is_empty() {
        return Err(Error::EmptyImage);
    }
    GrayImage::new(w, h, values)
}

/// Quantizes a normalized value to a byte with round-half-up.
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Writes an 8-bit grayscale PNG; each value `v` becomes `round(v * 255)`.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if !img.is_normalized() {
        return Err(Error::invalid("save_image expects values in [0, 1]"));
    }
    let bytes: Vec<u8> = img.values().iter().map(|&v| to_byte(v)).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, bytes)
            .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_write_error(path, e))
}

/// Writes integer labels as a 16-bit grayscale PNG.
pub fn save_labels_png(width: usize, height: usize, labels: &[u32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut raw = Vec::with_capacity(labels.len());
    for &l in labels {
        raw.push(u16::try_from(l).map_err(|_| Error::invalid("label exceeds 16 bits"))?);
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, raw)
            .ok_or_else(|| Error::invalid("label count does not match dimensions"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_write_error(path, e))
}

fn image_write_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    }
}

/// Index into `0..n` for a possibly out-of-range position, reflecting about
/// the edges with the edge sample repeated (`c b a | a b c | c b a`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Thresholds with an inclusive comparison: a bit is set when `value >= threshold`.
pub fn binarize(img: &GrayImage, threshold: f64) -> BinaryImage {
    BinaryImage::from_fn(img.width(), img.height(), |x, y| img.get(x, y) >= threshold)
}

/// `v -> 1 - v`.
pub fn invert(img: &GrayImage) -> GrayImage {
    img.map(|v| 1.0 - v)
}
