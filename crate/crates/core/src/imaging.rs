//! Grayscale frames and the few raster operations the pipeline needs.

use std::path::Path;

use image::{ImageBuffer, Luma};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, thiserror::Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Codec {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

impl GrayFrame {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    /// Rounds to 8 bits, the on-disk precision.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Self {
        assert_eq!(bytes.len(), width * height, "pixel count does not match dimensions");
        Self {
            width,
            height,
            data: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }

    /// Same frame after an 8-bit round trip.
    pub fn quantized(&self) -> Self {
        Self::from_u8(self.width, self.height, &self.to_u8())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageIoError> {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.to_u8()).expect("buffer size");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| ImageIoError::Codec {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageIoError> {
        let img = image::open(path)
            .map_err(|source| ImageIoError::Codec {
                path: path.display().to_string(),
                source,
            })?
            .into_luma8();
        let (w, h) = img.dimensions();
        Ok(Self::from_u8(w as usize, h as usize, img.as_raw()))
    }

    /// Area-averaging resize (box filter with fractional pixel overlap).
    pub fn resize(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = Self::zeros(width, height);
        for row in 0..height {
            let (y0, y1) = (row as f64 * sy, (row + 1) as f64 * sy);
            for col in 0..width {
                let (x0, x1) = (col as f64 * sx, (col + 1) as f64 * sx);
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for iy in y0.floor() as usize..(y1.ceil() as usize).min(self.height) {
                    let wy = (y1.min(iy as f64 + 1.0) - y0.max(iy as f64)).max(0.0);
                    for ix in x0.floor() as usize..(x1.ceil() as usize).min(self.width) {
                        let wx = (x1.min(ix as f64 + 1.0) - x0.max(ix as f64)).max(0.0);
                        acc += wx * wy * self.get(ix, iy) as f64;
                        wsum += wx * wy;
                    }
                }
                out.set(col, row, if wsum > 0.0 { (acc / wsum) as f32 } else { 0.0 });
            }
        }
        out
    }
}

/// Separable Gaussian blur with clamped borders. `sigma <= 0` is a no-op.
pub fn gaussian_blur(data: &[f32], width: usize, height: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; data.len()];
    for row in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let c = clamp(col as isize + k as isize - radius, width);
                acc += w * data[row * width + c] as f64;
            }
            tmp[row * width + col] = acc as f32;
        }
    }
    let mut out = vec![0.0f32; data.len()];
    for row in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let r = clamp(row as isize + k as isize - radius, height);
                acc += w * tmp[r * width + col] as f64;
            }
            out[row * width + col] = acc as f32;
        }
    }
    out
}
