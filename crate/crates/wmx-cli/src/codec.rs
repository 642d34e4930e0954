//! Loading whichever latent model a path points at.

use std::path::Path;

use wmx_core::latentgrid::{LatentDecoder, LatentEncoder};
use wmx_core::nets::Lstm;
use wmx_core::rgae::SingularBasis;
use wmx_core::store::{load_model, palette_path, ClassFrame, FrameDataset, ModelKind, Palette, CLASS_COUNT};
use wmx_core::{Basis64, Lstm64, Vae64};

use crate::error::{CliError, Result};

/// A VAE or a singular-vector basis, both usable as encoder and decoder.
pub enum Codec {
    Vae(Box<Vae64>),
    Basis(Box<Basis64>),
}

impl Codec {
    pub fn load(prefix: &Path) -> Result<Self> {
        let (manifest, tensors) = load_model(prefix)?;
        match manifest.model_kind {
            ModelKind::Vae => Ok(Codec::Vae(Box::new(Vae64::from_parts(&manifest, &tensors)?))),
            ModelKind::Basis => Ok(Codec::Basis(Box::new(SingularBasis::from_parts(&manifest, &tensors)?))),
            ModelKind::Lstm => Err(CliError::usage(format!(
                "{} is an LSTM; expected a VAE or a basis",
                prefix.display()
            ))),
        }
    }
}

impl LatentDecoder<f64> for Codec {
    fn latent_dim(&self) -> usize {
        match self {
            Codec::Vae(m) => LatentDecoder::latent_dim(m.as_ref()),
            Codec::Basis(b) => LatentDecoder::latent_dim(b.as_ref()),
        }
    }

    fn dense_shape(&self) -> (usize, usize, usize) {
        match self {
            Codec::Vae(m) => m.dense_shape(),
            Codec::Basis(b) => b.dense_shape(),
        }
    }

    fn decode_dense(&self, z: &[f64]) -> wmx_core::Result<Vec<f64>> {
        match self {
            Codec::Vae(m) => m.decode_dense(z),
            Codec::Basis(b) => b.decode_dense(z),
        }
    }

    fn decode_frame(&self, z: &[f64]) -> wmx_core::Result<ClassFrame> {
        match self {
            Codec::Vae(m) => m.decode_frame(z),
            Codec::Basis(b) => b.decode_frame(z),
        }
    }
}

impl LatentEncoder<f64> for Codec {
    fn encode_frame(&self, frame: &ClassFrame) -> wmx_core::Result<Vec<f64>> {
        match self {
            Codec::Vae(m) => m.encode_frame(frame),
            Codec::Basis(b) => b.encode_frame(frame),
        }
    }
}

pub fn load_vae(prefix: &Path) -> Result<Vae64> {
    let (manifest, tensors) = load_model(prefix)?;
    Ok(Vae64::from_parts(&manifest, &tensors)?)
}

pub fn load_lstm(prefix: &Path) -> Result<Lstm64> {
    let (manifest, tensors) = load_model(prefix)?;
    Ok(Lstm::from_parts(&manifest, &tensors)?)
}

pub fn load_basis(prefix: &Path) -> Result<Basis64> {
    let (manifest, tensors) = load_model(prefix)?;
    Ok(SingularBasis::from_parts(&manifest, &tensors)?)
}

/// A frame file with its sidecar palette, falling back to the urban palette
/// for 24-class data and a gray ramp otherwise.
pub fn load_frames(path: &Path) -> Result<(FrameDataset, Palette)> {
    let frames = FrameDataset::read(path)?;
    let pal = palette_path(path);
    let palette = if pal.exists() {
        Palette::read(&pal)?
    } else {
        default_palette(frames.class_count())
    };
    Ok((frames, palette))
}

pub fn default_palette(class_count: u8) -> Palette {
    if class_count as usize == CLASS_COUNT {
        Palette::urban()
    } else {
        Palette::grayscale(class_count)
    }
}

pub fn frame_at(frames: &FrameDataset, index: usize) -> Result<ClassFrame> {
    if index >= frames.len() {
        return Err(CliError::usage(format!(
            "frame index {index} out of range ({} frames)",
            frames.len()
        )));
    }
    Ok(frames.frame(index)?)
}
