//! Semantic class-index frames, the `FRM1` dataset container and class palettes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ppm::RgbImage;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const FRAME_HEIGHT: usize = 45;
pub const FRAME_WIDTH: usize = 85;
pub const CLASS_COUNT: usize = 24;

const MAGIC: &[u8; 4] = b"FRM1";
const HEADER_LEN: usize = 13;

/// Class indices used by the synthetic street renderer.
pub mod class {
    pub const UNLABELED: u8 = 0;
    pub const BUILDING: u8 = 1;
    pub const PEDESTRIAN: u8 = 4;
    pub const POLE: u8 = 5;
    pub const ROAD_LINE: u8 = 6;
    pub const ROAD: u8 = 7;
    pub const SIDEWALK: u8 = 8;
    pub const VEGETATION: u8 = 9;
    pub const CAR: u8 = 10;
    pub const SKY: u8 = 13;
    pub const TERRAIN: u8 = 22;
    pub const CYCLIST: u8 = 20;
    pub const CROSSWALK: u8 = 23;
}

/// One semantic frame: `height × width` class indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassFrame {
    height: usize,
    width: usize,
    class_count: u8,
    data: Vec<u8>,
}

impl ClassFrame {
    pub fn new(height: usize, width: usize, class_count: u8, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || class_count == 0 {
            return Err(Error::shape("frame dimensions and class count must be positive"));
        }
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} frame needs {} pixels, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| v >= class_count) {
            return Err(Error::format(
                "frame",
                format!("class {bad} >= class count {class_count}"),
            ));
        }
        Ok(Self {
            height,
            width,
            class_count,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, class_count: u8, class: u8) -> Result<Self> {
        Self::new(height, width, class_count, vec![class; height * width])
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn class_count(&self) -> u8 {
        self.class_count
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// `class_count × height × width` one-hot expansion.
    pub fn one_hot<T: Real>(&self) -> Vec<T> {
        let plane = self.height * self.width;
        let mut out = vec![T::zero(); self.class_count as usize * plane];
        for (i, &c) in self.data.iter().enumerate() {
            out[c as usize * plane + i] = T::one();
        }
        out
    }

    /// Pixel count per class.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count as usize];
        for &c in &self.data {
            h[c as usize] += 1;
        }
        h
    }

    pub fn render(&self, palette: &Palette) -> RgbImage {
        let mut img = RgbImage::new(self.width, self.height);
        for (i, &c) in self.data.iter().enumerate() {
            img.set_pixel(i / self.width, i % self.width, palette.rgb(c));
        }
        img
    }

    /// Real-valued vector for linear analysis.
    pub fn to_vector<T: Real>(&self, mode: Vectorization) -> Vec<T> {
        match mode {
            Vectorization::Intensity => {
                let scale = T::from_usize_lossy((self.class_count as usize).saturating_sub(1).max(1));
                self.data
                    .iter()
                    .map(|&c| T::from_usize_lossy(c as usize) / scale)
                    .collect()
            }
            Vectorization::OneHot => self.one_hot(),
        }
    }

    /// Inverse of [`ClassFrame::to_vector`]: clamps intensities to `[0, 1]` and
    /// rounds to the nearest class, or takes the per-pixel argmax over channels.
    pub fn from_vector<T: Real>(
        values: &[T],
        mode: Vectorization,
        height: usize,
        width: usize,
        class_count: u8,
    ) -> Result<Self> {
        let plane = height * width;
        let data = match mode {
            Vectorization::Intensity => {
                if values.len() != plane {
                    return Err(Error::shape("intensity vector length"));
                }
                let top = T::from_usize_lossy((class_count as usize).saturating_sub(1));
                values
                    .iter()
                    .map(|&v| {
                        let v = if v.is_nan() {
                            T::zero()
                        } else {
                            v.max(T::zero()).min(T::one())
                        };
                        (v * top).round().to_u8().unwrap_or(0)
                    })
                    .collect()
            }
            Vectorization::OneHot => {
                if values.len() != plane * class_count as usize {
                    return Err(Error::shape("one-hot vector length"));
                }
                channel_argmax(values, class_count as usize, plane)
            }
        };
        Self::new(height, width, class_count, data)
    }
}

/// Per-pixel argmax over a `channels × plane` stack (first maximum wins).
pub fn channel_argmax<T: Real>(values: &[T], channels: usize, plane: usize) -> Vec<u8> {
    (0..plane)
        .map(|p| {
            let mut best = 0;
            for c in 1..channels {
                if values[c * plane + p] > values[best * plane + p] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

/// How a class-index frame becomes a real vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vectorization {
    /// One channel, class index scaled by `1/(class_count − 1)`.
    #[default]
    Intensity,
    /// `class_count` channels, one-hot.
    OneHot,
}

impl Vectorization {
    pub fn dim(self, height: usize, width: usize, class_count: u8) -> usize {
        match self {
            Vectorization::Intensity => height * width,
            Vectorization::OneHot => height * width * class_count as usize,
        }
    }

    pub fn channels(self, class_count: u8) -> usize {
        match self {
            Vectorization::Intensity => 1,
            Vectorization::OneHot => class_count as usize,
        }
    }
}

/// A sequence of equally sized class-index frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameDataset {
    height: usize,
    width: usize,
    class_count: u8,
    pixels: Vec<u8>,
}

impl FrameDataset {
    pub fn new(height: usize, width: usize, class_count: u8) -> Result<Self> {
        if height == 0 || width == 0 || class_count == 0 {
            return Err(Error::shape("dataset dimensions and class count must be positive"));
        }
        if height > u16::MAX as usize || width > u16::MAX as usize {
            return Err(Error::shape("frame dimensions exceed 16 bits"));
        }
        Ok(Self {
            height,
            width,
            class_count,
            pixels: Vec::new(),
        })
    }

    pub fn from_frames(frames: &[ClassFrame]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::invalid("empty frame list"))?;
        let mut ds = Self::new(first.height, first.width, first.class_count)?;
        for f in frames {
            ds.push(f)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, frame: &ClassFrame) -> Result<()> {
        if frame.height != self.height || frame.width != self.width || frame.class_count != self.class_count {
            return Err(Error::shape("frame does not match dataset geometry"));
        }
        self.pixels.extend_from_slice(&frame.data);
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.pixels.len() / (self.height * self.width)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn class_count(&self) -> u8 {
        self.class_count
    }

    pub fn frame(&self, index: usize) -> Result<ClassFrame> {
        if index >= self.len() {
            return Err(Error::invalid(format!(
                "frame {index} out of range (dataset has {})",
                self.len()
            )));
        }
        let plane = self.height * self.width;
        Ok(ClassFrame {
            height: self.height,
            width: self.width,
            class_count: self.class_count,
            data: self.pixels[index * plane..(index + 1) * plane].to_vec(),
        })
    }

    pub fn frames(&self) -> impl Iterator<Item = ClassFrame> + '_ {
        (0..self.len()).map(|i| self.frame(i).expect("index in range"))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let count = u32::try_from(self.len()).map_err(|_| Error::shape("too many frames"))?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.pixels.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&(self.height as u16).to_le_bytes());
        out.extend_from_slice(&(self.width as u16).to_le_bytes());
        out.push(self.class_count);
        out.extend_from_slice(&self.pixels);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::format("frame dataset", "missing FRM1 header"));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let height = u16::from_le_bytes(bytes[8..10].try_into().expect("2 bytes")) as usize;
        let width = u16::from_le_bytes(bytes[10..12].try_into().expect("2 bytes")) as usize;
        let class_count = bytes[12];
        let mut ds = Self::new(height, width, class_count)?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != count * height * width {
            return Err(Error::format(
                "frame dataset",
                format!("expected {} pixel bytes, found {}", count * height * width, body.len()),
            ));
        }
        if let Some(pos) = body.iter().position(|&v| v >= class_count) {
            return Err(Error::format(
                "frame dataset",
                format!(
                    "byte {} at offset {pos} is not below class count {class_count}",
                    body[pos]
                ),
            ));
        }
        ds.pixels = body.to_vec();
        Ok(ds)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

/// `scene.frm` → `scene.palette.json`.
pub fn palette_path(frames_path: &Path) -> PathBuf {
    frames_path.with_extension("palette.json")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaletteEntry {
    pub name: String,
    pub rgb: [u8; 3],
}

/// Class index → display name and color.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    entries: Vec<PaletteEntry>,
}

impl Palette {
    pub fn new(entries: Vec<PaletteEntry>) -> Self {
        Self { entries }
    }

    /// The 24-class urban palette used by the scenario renderer.
    pub fn urban() -> Self {
        const CLASSES: [(&str, [u8; 3]); CLASS_COUNT] = [
            ("unlabeled", [0, 0, 0]),
            ("building", [70, 70, 70]),
            ("fence", [100, 40, 40]),
            ("other", [55, 90, 80]),
            ("pedestrian", [220, 20, 60]),
            ("pole", [153, 153, 153]),
            ("road_line", [157, 234, 50]),
            ("road", [128, 64, 128]),
            ("sidewalk", [244, 35, 232]),
            ("vegetation", [107, 142, 35]),
            ("car", [0, 0, 142]),
            ("wall", [102, 102, 156]),
            ("traffic_sign", [220, 220, 0]),
            ("sky", [70, 130, 180]),
            ("ground", [81, 0, 81]),
            ("bridge", [150, 100, 100]),
            ("rail_track", [230, 150, 140]),
            ("guard_rail", [180, 165, 180]),
            ("traffic_light", [250, 170, 30]),
            ("static", [110, 190, 160]),
            ("cyclist", [119, 11, 32]),
            ("water", [45, 60, 150]),
            ("terrain", [145, 170, 100]),
            ("crosswalk", [255, 255, 255]),
        ];
        Self::new(
            CLASSES
                .iter()
                .map(|&(name, rgb)| PaletteEntry {
                    name: name.to_string(),
                    rgb,
                })
                .collect(),
        )
    }

    /// Gray ramp for `levels` intensity classes.
    pub fn grayscale(levels: u8) -> Self {
        let top = (levels.max(2) - 1) as f64;
        Self::new(
            (0..levels)
                .map(|i| {
                    let g = (i as f64 / top * 255.0).round() as u8;
                    PaletteEntry {
                        name: format!("level_{i}"),
                        rgb: [g, g, g],
                    }
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Color for a class; unknown classes render black.
    pub fn rgb(&self, class: u8) -> [u8; 3] {
        self.entries.get(class as usize).map_or([0, 0, 0], |e| e.rgb)
    }

    pub fn name(&self, class: u8) -> &str {
        self.entries.get(class as usize).map_or("unknown", |e| e.name.as_str())
    }

    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<u8, (&str, u8, u8, u8)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (i as u8, (e.name.as_str(), e.rgb[0], e.rgb[1], e.rgb[2])))
            .collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<u8, (String, u8, u8, u8)> = serde_json::from_str(text)?;
        let mut entries = Vec::with_capacity(map.len());
        for (expected, (index, (name, r, g, b))) in map.into_iter().enumerate() {
            if index as usize != expected {
                return Err(Error::format(
                    "palette",
                    format!("class indices must be contiguous, missing {expected}"),
                ));
            }
            entries.push(PaletteEntry { name, rgb: [r, g, b] });
        }
        Ok(Self::new(entries))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FrameDataset {
        let a = ClassFrame::new(2, 3, 4, vec![0, 1, 2, 3, 0, 1]).unwrap();
        let b = ClassFrame::filled(2, 3, 4, 2).unwrap();
        FrameDataset::from_frames(&[a, b]).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = tiny().encode().unwrap();
        assert_eq!(&bytes[..4], b"FRM1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &[2, 0, 3, 0]);
        assert_eq!(bytes[12], 4);
        assert_eq!(bytes.len(), 13 + 12);
        assert_eq!(FrameDataset::decode(&bytes).unwrap(), tiny());
    }

    #[test]
    fn rejects_out_of_palette_bytes() {
        let mut bytes = tiny().encode().unwrap();
        bytes[13] = 4;
        assert!(FrameDataset::decode(&bytes).is_err());
        assert!(ClassFrame::new(1, 2, 4, vec![0, 9]).is_err());
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let bytes = tiny().encode().unwrap();
        assert!(FrameDataset::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(FrameDataset::decode(b"FRM2\0\0\0\0\0\0\0\0\0").is_err());
        assert!(FrameDataset::decode(b"").is_err());
    }

    #[test]
    fn one_hot_has_single_hot_channel() {
        let f = ClassFrame::new(2, 2, 3, vec![0, 2, 1, 2]).unwrap();
        let oh: Vec<f64> = f.one_hot();
        for p in 0..4 {
            let hot: f64 = (0..3).map(|c| oh[c * 4 + p]).sum();
            assert_eq!(hot, 1.0);
            assert_eq!(oh[f.pixels()[p] as usize * 4 + p], 1.0);
        }
    }

    #[test]
    fn vector_round_trip() {
        let f = ClassFrame::new(2, 2, 24, vec![0, 7, 23, 13]).unwrap();
        for mode in [Vectorization::Intensity, Vectorization::OneHot] {
            let v: Vec<f64> = f.to_vector(mode);
            assert_eq!(ClassFrame::from_vector(&v, mode, 2, 2, 24).unwrap(), f);
        }
    }

    #[test]
    fn palette_json_round_trip() {
        let p = Palette::urban();
        assert_eq!(p.len(), CLASS_COUNT);
        let json = p.to_json().unwrap();
        assert!(json.contains("\"23\""));
        assert_eq!(Palette::from_json(&json).unwrap(), p);
        assert_eq!(p.name(class::CROSSWALK), "crosswalk");
    }
}
