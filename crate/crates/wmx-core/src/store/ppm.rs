use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_gray(width: usize, height: usize, gray: &[u8]) -> Self {
        let data = gray.iter().flat_map(|&g| [g, g, g]).collect();
        Self { width, height, data }
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies `src` with its top-left corner at `(y, x)`, clipping at the borders.
    pub fn blit(&mut self, src: &RgbImage, y: usize, x: usize) {
        for sy in 0..src.height.min(self.height.saturating_sub(y)) {
            for sx in 0..src.width.min(self.width.saturating_sub(x)) {
                self.set_pixel(y + sy, x + sx, src.pixel(sy, sx));
            }
        }
    }

    /// Binary P6 encoding: `P6\n<W> <H>\n255\n` followed by the raw bytes.
    pub fn encode_ppm(&self) -> Result<Vec<u8>> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!(
                "cannot encode a {}x{} image",
                self.width, self.height
            )));
        }
        if self.data.len() != self.width * self.height * 3 {
            return Err(Error::shape("pixel buffer does not match image dimensions"));
        }
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        Ok(out)
    }
}

pub fn write_ppm(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let bytes = image.encode_ppm()?;
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
