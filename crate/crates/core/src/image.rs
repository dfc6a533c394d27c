use std::path::Path;

use crate::error::{Error, Result};

/// Square planar RGB image with channel values in `[0, 1]`, laid out `[3, size, size]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    size: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(size: usize) -> Self {
        Self { size, data: vec![0.0; 3 * size * size] }
    }

    pub fn from_planar(size: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * size * size {
            return Err(Error::invalid(format!(
                "planar buffer of {} values for a {size}x{size} image",
                data.len()
            )));
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.size + y) * self.size + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.size + y) * self.size + x] = v;
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        [self.get(0, y, x), self.get(1, y, x), self.get(2, y, x)]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        for (c, v) in rgb.into_iter().enumerate() {
            self.set(c, y, x, v);
        }
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.size, other.size);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs() as f64).sum::<f64>()
            / self.data.len() as f64
    }

    /// Per-pixel flag: does any channel differ by more than `tol`?
    pub fn diff_mask(&self, other: &Image, tol: f32) -> Vec<bool> {
        assert_eq!(self.size, other.size);
        let n = self.size * self.size;
        (0..n)
            .map(|p| (0..3).any(|c| (self.data[c * n + p] - other.data[c * n + p]).abs() > tol))
            .collect()
    }

    /// Round-trip through 8-bit quantisation, as stored on disk.
    pub fn quantized(&self) -> Image {
        Image {
            size: self.size,
            data: self.data.iter().map(|&v| to_u8(v) as f32 / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let n = self.size;
        let mut buf = image::RgbImage::new(n as u32, n as u32);
        for y in 0..n {
            for x in 0..n {
                let [r, g, b] = self.pixel(y, x);
                buf.put_pixel(x as u32, y as u32, image::Rgb([to_u8(r), to_u8(g), to_u8(b)]));
            }
        }
        buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::io(path, e))
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let img = image::open(path).map_err(|e| Error::io(path, e))?.to_rgb8();
        let (w, h) = img.dimensions();
        if w != h {
            return Err(Error::io(path, format!("expected a square image, got {w}x{h}")));
        }
        let n = w as usize;
        let mut out = Image::new(n);
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, p.0[c] as f32 / 255.0);
            }
        }
        Ok(out)
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
