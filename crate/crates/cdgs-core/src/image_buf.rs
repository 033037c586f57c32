//! RGB float image container with PNG and raw-float I/O.
//!
//! Pixels are stored row-major as `[r, g, b]` triples in linear [0, 1].
//! The raw format is a small self-describing header followed by
//! little-endian `f32` samples; see `docs/formats.md`.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

/// Magic for the raw float image format.
pub const RAW_IMAGE_MAGIC: [u8; 4] = *b"CDGF";

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    pub width: usize,
    pub height: usize,
    /// `height * width * 3` values, row-major, RGB interleaved.
    pub data: Vec<f32>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuf {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        ImageBuf {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Mean absolute difference over all samples.
    pub fn mean_abs_diff(&self, other: &ImageBuf) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        sum / self.data.len() as f64
    }

    /// Mean squared error over all samples.
    pub fn mse(&self, other: &ImageBuf) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = (a - b) as f64;
                d * d
            })
            .sum();
        sum / self.data.len() as f64
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut out = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let p = self.pixel(x, y);
                let q = p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
                out.put_pixel(x as u32, y as u32, image::Rgb(q));
            }
        }
        out.save(path).map_err(|e| Error::Image(e.to_string()))
    }

    pub fn load_png(path: &Path) -> Result<ImageBuf> {
        let img = image::open(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut buf = ImageBuf::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let p = img.get_pixel(x as u32, y as u32).0;
                buf.set_pixel(x, y, p.map(|v| v as f32 / 255.0));
            }
        }
        Ok(buf)
    }

    /// Write the raw float format: magic, height, width, channels, then samples.
    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(16 + self.data.len() * 4);
        bytes.extend_from_slice(&RAW_IMAGE_MAGIC);
        bytes.extend_from_slice(&(self.height as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.width as u32).to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_raw(path: &Path) -> Result<ImageBuf> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::io(path, e))?
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || bytes[0..4] != RAW_IMAGE_MAGIC {
            return Err(Error::Format(format!(
                "{}: not a raw float image",
                path.display()
            )));
        }
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let c = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if c != 3 {
            return Err(Error::Format(format!("expected 3 channels, found {c}")));
        }
        let n = h * w * 3;
        if bytes.len() != 16 + n * 4 {
            return Err(Error::Format("raw image payload length mismatch".into()));
        }
        let data = bytes[16..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(ImageBuf {
            width: w,
            height: h,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_quantizes_to_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = ImageBuf::new(5, 4);
        for y in 0..4 {
            for x in 0..5 {
                img.set_pixel(x, y, [x as f32 / 5.0, y as f32 / 4.0, 0.25]);
            }
        }
        let p = dir.path().join("t.png");
        img.save_png(&p).unwrap();
        let back = ImageBuf::load_png(&p).unwrap();
        assert!(img.mean_abs_diff(&back) < 0.5 / 255.0 + 1e-6);
    }

    #[test]
    fn raw_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = ImageBuf::new(3, 2);
        img.data
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = (i as f32).sin());
        let p = dir.path().join("t.cdgf");
        img.save_raw(&p).unwrap();
        let back = ImageBuf::load_raw(&p).unwrap();
        assert_eq!(img, back);
    }
}
