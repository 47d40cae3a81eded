//! Minimal owned RGB / grayscale rasters and binary PPM (P6) I/O.
//!
//! Pixel `(x, y)` covers the square `[x, x+1) × [y, y+1)`; its center is at
//! `(x + 0.5, y + 0.5)`. All geometry in the crate uses this convention.

use crate::color::ColorRgb;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PpmError {
    #[error("not a binary PPM (P6) image")]
    BadMagic,
    #[error("malformed PPM header")]
    BadHeader,
    #[error("unsupported maxval {0}; only 255 is supported")]
    UnsupportedMaxval(u32),
    #[error("pixel data truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, color: ColorRgb) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color.channels());
        }
        Self { width, height, data }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height * 3).then_some(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> ColorRgb {
        let i = (y * self.width + x) * 3;
        ColorRgb::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn put(&mut self, x: usize, y: usize, c: ColorRgb) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c.channels());
    }

    /// Rec. 601 luma as floating point.
    /// Luma `0.299 R + 0.587 G + 0.114 B`. The per-channel products come
    /// from tables; the sums are taken in the same order, so the result is
    /// bit-identical to multiplying per pixel.
    pub fn to_gray(&self) -> GrayImage {
        let table = |k: f32| -> [f32; 256] { std::array::from_fn(|v| k * v as f32) };
        let (r, g, b) = (table(0.299), table(0.587), table(0.114));
        let mut data = Vec::with_capacity(self.width * self.height);
        data.extend(self.data.chunks_exact(3).map(|p| r[p[0] as usize] + g[p[1] as usize] + b[p[2] as usize]));
        GrayImage { width: self.width, height: self.height, data }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self, PpmError> {
        if !bytes.starts_with(b"P6") {
            return Err(PpmError::BadMagic);
        }
        let mut pos = 2;
        let mut fields = [0u32; 3];
        for field in &mut fields {
            // whitespace and comments between header fields
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(_) => break,
                    None => return Err(PpmError::BadHeader),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or(PpmError::BadHeader)?;
        }
        // exactly one whitespace byte separates the header from the raster
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(PpmError::BadHeader);
        }
        pos += 1;
        let [w, h, maxval] = fields;
        if maxval != 255 {
            return Err(PpmError::UnsupportedMaxval(maxval));
        }
        let (w, h) = (w as usize, h as usize);
        let expected = w * h * 3;
        let raster = &bytes[pos..];
        if raster.len() < expected {
            return Err(PpmError::Truncated { expected, found: raster.len() });
        }
        Ok(Self { width: w, height: h, data: raster[..expected].to_vec() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Half-resolution copy; each pixel is the mean of a 2×2 block.
    pub fn downsample2(&self) -> GrayImage {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            let (a, b) = (&self.data[2 * y * self.width..], &self.data[(2 * y + 1) * self.width..]);
            for x in 0..w {
                data.push(0.25 * (a[2 * x] + a[2 * x + 1] + b[2 * x] + b[2 * x + 1]));
            }
        }
        GrayImage { width: w, height: h, data }
    }

    /// Bilinear sample at continuous coordinates (pixel centers at +0.5).
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (tx, ty) = ((fx - x0 as f64) as f32, (fy - y0 as f64) as f32);
        let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
        let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_matches_the_luma_formula_bit_for_bit() {
        let data: Vec<u8> = (0..3 * 4096u32).map(|i| (i.wrapping_mul(2_654_435_761) >> 13) as u8).collect();
        let img = RgbImage::from_raw(64, 64, data.clone()).unwrap();
        let gray = img.to_gray();
        for (p, g) in data.chunks_exact(3).zip(gray.as_slice()) {
            let want = 0.299 * f32::from(p[0]) + 0.587 * f32::from(p[1]) + 0.114 * f32::from(p[2]);
            assert_eq!(g.to_bits(), want.to_bits());
        }
    }

    #[test]
    fn ppm_round_trip() {
        let mut img = RgbImage::filled(3, 2, ColorRgb::new(1, 2, 3));
        img.put(2, 1, ColorRgb::new(250, 0, 9));
        let bytes = img.to_ppm();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(RgbImage::from_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn ppm_header_with_comment() {
        let mut bytes = b"P6 # made by hand\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 8, 9]);
        assert_eq!(RgbImage::from_ppm(&bytes).unwrap().get(0, 0), ColorRgb::new(7, 8, 9));
    }

    #[test]
    fn ppm_errors() {
        assert_eq!(RgbImage::from_ppm(b"P3\n1 1\n255\n"), Err(PpmError::BadMagic));
        assert_eq!(RgbImage::from_ppm(b"P6\n1 1\n65535\n"), Err(PpmError::UnsupportedMaxval(65535)));
        assert_eq!(
            RgbImage::from_ppm(b"P6\n2 1\n255\n\x01\x02\x03"),
            Err(PpmError::Truncated { expected: 6, found: 3 })
        );
        assert_eq!(RgbImage::from_ppm(b"P6\nx"), Err(PpmError::BadHeader));
    }

    #[test]
    fn downsample_averages_blocks() {
        let mut g = GrayImage::new(4, 3);
        g.set(0, 0, 4.0);
        g.set(3, 1, 8.0);
        let d = g.downsample2();
        assert_eq!((d.width(), d.height()), (2, 1));
        assert_eq!(d.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn bilinear_sample_at_pixel_centers() {
        let mut g = GrayImage::new(2, 1);
        g.set(0, 0, 10.0);
        g.set(1, 0, 20.0);
        assert_eq!(g.sample(0.5, 0.5), 10.0);
        assert_eq!(g.sample(1.0, 0.5), 15.0);
    }
}
