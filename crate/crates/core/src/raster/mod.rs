//! Grayscale raster container, PGM/PNG I/O, drawing and degradation.
//!
//! Intensities are `u8` with white (255) as background and black (0) as ink.
//! A pixel counts as ink when its value is below [`INK_THRESHOLD`].

mod degrade;
mod draw;

use std::fs;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

pub use degrade::{degrade, degrade_with, DegradeConfig, NoiseLevel};
pub use draw::Primitive;

use crate::error::{Error, Result};

pub const WHITE: u8 = 255;
pub const INK: u8 = 0;
pub const INK_THRESHOLD: u8 = 128;

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("ink", &self.ink_count())
            .finish()
    }
}

impl GrayImage {
    /// A `width × height` image filled with `value`.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be positive");
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn white(width: usize, height: usize) -> Self {
        Self::filled(width, height, WHITE)
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("image dimensions {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel buffer has {} bytes, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Value at signed coordinates, or `None` outside the image.
    pub fn get_checked(&self, x: i64, y: i64) -> Option<u8> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    pub fn is_ink(&self, x: usize, y: usize) -> bool {
        self.get(x, y) < INK_THRESHOLD
    }

    pub fn ink_count(&self) -> usize {
        self.data.iter().filter(|&&v| v < INK_THRESHOLD).count()
    }

    /// Ink pixels whose index lies in `[x0, x1) × [y0, y1)`, clipped to the image.
    pub fn ink_count_in(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> usize {
        let (x0, y0) = (x0.max(0) as usize, y0.max(0) as usize);
        let x1 = (x1.max(0) as usize).min(self.width);
        let y1 = (y1.max(0) as usize).min(self.height);
        let mut n = 0;
        for y in y0..y1 {
            n += self.data[y * self.width + x0.min(x1)..y * self.width + x1]
                .iter()
                .filter(|&&v| v < INK_THRESHOLD)
                .count();
        }
        n
    }

    /// Crops a `side × side` window at `(x0, y0)`; pixels outside the image
    /// take `pad`.
    pub fn crop_padded(&self, x0: i64, y0: i64, side: usize, pad: u8) -> GrayImage {
        let mut out = GrayImage::filled(side, side, pad);
        for ty in 0..side {
            let sy = y0 + ty as i64;
            if sy < 0 || sy >= self.height as i64 {
                continue;
            }
            for tx in 0..side {
                if let Some(v) = self.get_checked(x0 + tx as i64, sy) {
                    out.data[ty * side + tx] = v;
                }
            }
        }
        out
    }

    /// Bilinear resample to `new_w × new_h` (pixel-center aligned).
    pub fn resize_bilinear(&self, new_w: usize, new_h: usize) -> GrayImage {
        if new_w == self.width && new_h == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        let mut out = GrayImage::white(new_w, new_h);
        for oy in 0..new_h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for ox in 0..new_w {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let top = self.get(x0, y0) as f64 * (1.0 - tx) + self.get(x1, y0) as f64 * tx;
                let bot = self.get(x0, y1) as f64 * (1.0 - tx) + self.get(x1, y1) as f64 * tx;
                let v = top * (1.0 - ty) + bot * ty;
                out.data[oy * new_w + ox] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        out
    }

    pub fn flip_horizontal(&self) -> GrayImage {
        let mut out = self.clone();
        for y in 0..self.height {
            out.data[y * self.width..(y + 1) * self.width].reverse();
        }
        out
    }

    pub fn flip_vertical(&self) -> GrayImage {
        let mut out = self.clone();
        for y in 0..self.height {
            let src = self.height - 1 - y;
            out.data[y * self.width..(y + 1) * self.width]
                .copy_from_slice(&self.data[src * self.width..(src + 1) * self.width]);
        }
        out
    }

    /// Rotates 90° clockwise: pixel `(x, y)` moves to `(height - 1 - y, x)`.
    pub fn rotate90_cw(&self) -> GrayImage {
        let (w, h) = (self.height, self.width);
        let mut out = GrayImage::white(w, h);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(self.height - 1 - y, x, self.get(x, y));
            }
        }
        out
    }

    /// Scales content by `factor` about the image center, keeping the
    /// canvas size; uncovered pixels take `pad`.
    pub fn scale_about_center(&self, factor: f64, pad: u8) -> GrayImage {
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        let mut out = GrayImage::filled(self.width, self.height, pad);
        for oy in 0..self.height {
            let sy = cy + (oy as f64 + 0.5 - cy) / factor - 0.5;
            for ox in 0..self.width {
                let sx = cx + (ox as f64 + 0.5 - cx) / factor - 0.5;
                if let Some(v) = self.sample_bilinear(sx, sy) {
                    out.data[oy * self.width + ox] = v;
                }
            }
        }
        out
    }

    fn sample_bilinear(&self, fx: f64, fy: f64) -> Option<u8> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if fx < -0.5 || fy < -0.5 || fx > max_x + 0.5 || fy > max_y + 0.5 {
            return None;
        }
        let (fx, fy) = (fx.clamp(0.0, max_x), fy.clamp(0.0, max_y));
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let top = self.get(x0, y0) as f64 * (1.0 - tx) + self.get(x1, y0) as f64 * tx;
        let bot = self.get(x0, y1) as f64 * (1.0 - tx) + self.get(x1, y1) as f64 * tx;
        Some((top * (1.0 - ty) + bot * ty).round().clamp(0.0, 255.0) as u8)
    }

    /// Serializes as binary PGM (P5, maxval 255).
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() + 32);
        PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&self.data, self.width as u32, self.height as u32, ExtendedColorType::L8)
            .expect("in-memory PGM encoding");
        out
    }

    /// Parses any PGM; non-8-bit samples are converted to 8 bits.
    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<GrayImage> {
        decode_with_format(bytes, ImageFormat::Pnm)
    }

    /// Writes a PGM file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pgm_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Loads a PGM file, or a PNG converted to luminance.
    pub fn load(path: impl AsRef<Path>) -> Result<GrayImage> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let format = if bytes.starts_with(b"P") { ImageFormat::Pnm } else { ImageFormat::Png };
        decode_with_format(&bytes, format).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

fn decode_with_format(bytes: &[u8], format: ImageFormat) -> Result<GrayImage> {
    let luma = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| Error::Format(e.to_string()))?
        .to_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    GrayImage::from_raw(w, h, luma.into_raw())
}
