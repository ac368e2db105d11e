//! Grayscale image container and file I/O (8-bit PNG and PGM).

use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};

/// Grayscale image with f64 samples in [0, 255]. Kept in floating point so
/// transform math loses nothing until the final write-out.
#[derive(Debug, Clone)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("empty image".into()));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {}x{} image",
                data.len(),
                width,
                height
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn from_u8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        GrayImage::new(width, height, pixels.iter().map(|&p| p as f64).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Rounds half away from zero and clamps to [0, 255].
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Center crop to the largest multiple of `block` in each dimension.
    pub fn center_crop_to_multiple(&self, block: usize) -> Result<GrayImage> {
        let w = (self.width / block) * block;
        let h = (self.height / block) * block;
        if w == 0 || h == 0 {
            return Err(Error::InvalidInput(format!(
                "image {}x{} smaller than one {}x{} block",
                self.width, self.height, block, block
            )));
        }
        let x0 = (self.width - w) / 2;
        let y0 = (self.height - h) / 2;
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        GrayImage::new(w, h, data)
    }

    /// Extracts block (bx, by) as a row-major vector of `side * side`
    /// samples. Dimensions must be block multiples.
    pub fn block(&self, bx: usize, by: usize, side: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(side * side);
        for r in 0..side {
            let y = by * side + r;
            let start = y * self.width + bx * side;
            out.extend_from_slice(&self.data[start..start + side]);
        }
        out
    }

    pub fn set_block(&mut self, bx: usize, by: usize, side: usize, values: &[f64]) {
        for r in 0..side {
            let y = by * side + r;
            let start = y * self.width + bx * side;
            self.data[start..start + side].copy_from_slice(&values[r * side..(r + 1) * side]);
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf = self.to_u8();
        image::save_buffer(
            path.as_ref(),
            &buf,
            self.width as u32,
            self.height as u32,
            image::ColorType::L8,
        )?;
        Ok(())
    }
}

/// Loads an 8-bit PNG or PGM. Color inputs are converted with BT.601
/// luma coefficients (0.299 R + 0.587 G + 0.114 B).
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let img = ImageReader::open(path.as_ref())?
        .with_guessed_format()?
        .decode()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|p| p as f64).collect(),
        DynamicImage::ImageLumaA8(g) => g.into_raw().chunks(2).map(|p| p[0] as f64).collect(),
        DynamicImage::ImageRgb8(rgb) => rgb
            .into_raw()
            .chunks(3)
            .map(|p| bt601(p[0], p[1], p[2]))
            .collect(),
        DynamicImage::ImageRgba8(rgba) => rgba
            .into_raw()
            .chunks(4)
            .map(|p| bt601(p[0], p[1], p[2]))
            .collect(),
        other => {
            return Err(Error::InvalidInput(format!(
                "unsupported pixel format {:?}; expected an 8-bit image",
                other.color()
            )))
        }
    };
    GrayImage::new(w, h, data)
}

#[inline]
fn bt601(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_centers() {
        let img = GrayImage::new(10, 9, ( 0..90).map(|i| i as f64).collect()).unwrap();
        let c = img.center_crop_to_multiple(4).unwrap();
        assert_eq!((c.width(), c.height()), (8, 8));
        // x offset 1, y offset 0
        assert_eq!(c.get(0, 0), 1.0);
    }

    #[test]
    fn crop_too_small_fails() {
        let img = GrayImage::constant(5, 5, 0.0).unwrap();
        assert!(img.center_crop_to_multiple(8).is_err());
    }

    #[test]
    fn block_roundtrip() {
        let mut img = GrayImage::constant(8, 8, 0.0).unwrap();
        let vals: Vec<f64> = (0..16).map(|i| i as f64).collect();
        img.set_block(1, 1, 4, &vals);
        assert_eq!(img.block(1, 1, 4), vals);
        assert_eq!(img.get(4, 4), 0.0);
        assert_eq!(img.get(5, 5), 5.0);
    }

    #[test]
    fn u8_rounding_clamps() {
        let img = GrayImage::new(2, 1, vec![-3.0, 300.0]).unwrap();
        assert_eq!(img.to_u8(), vec![0, 255]);
    }
}
