//! Convolutional VAE forward passes (mean path only).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{ConvLayer, DenseLayer, FeatureMap};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Real;
use crate::store::{
    channel_argmax, Activation, ClassFrame, FrameShape, LayerKind, LayerSpec, ModelKind, ModelManifest, Stage,
    TensorMap, TensorRecord, CLASS_COUNT, FRAME_HEIGHT, FRAME_WIDTH,
};

pub const PAPER_LATENT_DIM: usize = 50;
pub const PAPER_CONV_LAYERS: usize = 4;

/// Layer-by-layer description used to build randomly initialized VAEs.
#[derive(Debug, Clone)]
pub struct VaeArchitecture {
    pub frame: FrameShape,
    pub convs: Vec<LayerSpec>,
    pub latent_dim: usize,
    pub decoder_hidden: Vec<usize>,
}

impl VaeArchitecture {
    /// Four 4×4 convolutions taking a 24×45×85 frame to 256 maps of 2×2, a
    /// 50-dim mean head and a single dense decoder layer.
    pub fn paper_default() -> Self {
        let k = [4, 4];
        let pad = [1, 0];
        Self {
            frame: FrameShape {
                channels: CLASS_COUNT,
                height: FRAME_HEIGHT,
                width: FRAME_WIDTH,
            },
            convs: vec![
                LayerSpec::conv("enc1", CLASS_COUNT, 32, k, [2, 2], pad, Activation::Relu),
                LayerSpec::conv("enc2", 32, 64, k, [2, 2], pad, Activation::Relu),
                LayerSpec::conv("enc3", 64, 128, k, [2, 2], pad, Activation::Relu),
                LayerSpec::conv("enc4", 128, 256, k, [2, 3], pad, Activation::Relu),
            ],
            latent_dim: PAPER_LATENT_DIM,
            decoder_hidden: Vec::new(),
        }
    }
}

/// Decoder output: per-pixel class probabilities and their argmax frame.
#[derive(Debug, Clone)]
pub struct Decoded<T> {
    /// `channels × height × width`, softmax over channels.
    pub probs: Vec<T>,
    pub frame: ClassFrame,
}

#[derive(Debug, Clone)]
pub struct Vae<T> {
    frame: FrameShape,
    latent_dim: usize,
    encoder: Vec<ConvLayer<T>>,
    mean_head: DenseLayer<T>,
    decoder: Vec<DenseLayer<T>>,
}

impl<T: Real> Vae<T> {
    pub fn from_parts(manifest: &ModelManifest, tensors: &TensorMap) -> Result<Self> {
        if manifest.model_kind != ModelKind::Vae {
            return Err(Error::shape("manifest does not describe a VAE"));
        }
        let frame = manifest
            .frame
            .ok_or_else(|| Error::shape("VAE manifest lacks a frame shape"))?;
        if frame.channels == 0 || frame.channels > 255 {
            return Err(Error::shape("VAE frame channel count must be in 1..=255"));
        }
        let mut encoder = Vec::new();
        let mut mean_head = None;
        let mut decoder = Vec::new();
        for spec in &manifest.layers {
            match (spec.stage, spec.kind) {
                (Stage::Encoder, LayerKind::Conv) if mean_head.is_none() => {
                    encoder.push(ConvLayer::from_tensors(spec, tensors)?)
                }
                (Stage::MeanHead, LayerKind::Dense) if mean_head.is_none() => {
                    mean_head = Some(DenseLayer::from_tensors(spec, tensors)?)
                }
                (Stage::Decoder, LayerKind::Dense) if mean_head.is_some() => {
                    decoder.push(DenseLayer::from_tensors(spec, tensors)?)
                }
                _ => {
                    return Err(Error::shape(format!(
                        "layer `{}` ({:?}/{:?}) is out of place in a VAE manifest",
                        spec.name, spec.stage, spec.kind
                    )))
                }
            }
        }
        let mean_head = mean_head.ok_or_else(|| Error::shape("VAE manifest lacks a mean head"))?;
        let vae = Self {
            frame,
            latent_dim: manifest.latent_dim,
            encoder,
            mean_head,
            decoder,
        };
        vae.check_shapes()?;
        Ok(vae)
    }

    /// Assembles a VAE from already-built layers, validating shapes.
    pub fn from_layers(
        frame: FrameShape,
        encoder: Vec<ConvLayer<T>>,
        mean_head: DenseLayer<T>,
        decoder: Vec<DenseLayer<T>>,
    ) -> Result<Self> {
        let vae = Self {
            frame,
            latent_dim: mean_head.spec.out_channels,
            encoder,
            mean_head,
            decoder,
        };
        vae.check_shapes()?;
        Ok(vae)
    }

    fn check_shapes(&self) -> Result<()> {
        let (mut c, mut h, mut w) = (self.frame.channels, self.frame.height, self.frame.width);
        for layer in &self.encoder {
            if layer.spec.in_channels != c {
                return Err(Error::shape(format!(
                    "layer `{}` expects {} channels, receives {c}",
                    layer.spec.name, layer.spec.in_channels
                )));
            }
            (h, w) = layer
                .spec
                .conv_output(h, w)
                .ok_or_else(|| Error::shape(format!("kernel of `{}` does not fit", layer.spec.name)))?;
            c = layer.spec.out_channels;
        }
        if self.mean_head.spec.in_channels != c * h * w || self.mean_head.spec.out_channels != self.latent_dim {
            return Err(Error::shape(format!(
                "mean head must map {} features to {} latents",
                c * h * w,
                self.latent_dim
            )));
        }
        let mut n = self.latent_dim;
        for layer in &self.decoder {
            if layer.spec.in_channels != n {
                return Err(Error::shape(format!(
                    "decoder layer `{}` expects {} inputs, receives {n}",
                    layer.spec.name, layer.spec.in_channels
                )));
            }
            n = layer.spec.out_channels;
        }
        let want = self.frame.channels * self.frame.height * self.frame.width;
        if n != want {
            return Err(Error::shape(format!("decoder emits {n} values, frame needs {want}")));
        }
        Ok(())
    }

    pub fn to_parts(&self) -> Result<(ModelManifest, TensorMap)> {
        let mut manifest = ModelManifest::new(ModelKind::Vae, self.latent_dim);
        manifest.frame = Some(self.frame);
        let mut tensors = TensorMap::new();
        for l in &self.encoder {
            manifest.layers.push(l.spec.clone());
            l.export(&mut tensors)?;
        }
        manifest.layers.push(self.mean_head.spec.clone());
        self.mean_head.export(&mut tensors)?;
        for l in &self.decoder {
            manifest.layers.push(l.spec.clone());
            l.export(&mut tensors)?;
        }
        manifest.tensors = tensors
            .iter()
            .map(|(k, t)| TensorRecord::new(k.clone(), t.shape.clone()))
            .collect();
        Ok((manifest, tensors))
    }

    /// Random initialization, uniform in `±1/√fan_in`.
    pub fn random(arch: &VaeArchitecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<T> {
            let b = 1.0 / (fan_in.max(1) as f64).sqrt();
            (0..n).map(|_| T::lit(rng.gen_range(-b..=b))).collect()
        };
        let (mut c, mut h, mut w) = (arch.frame.channels, arch.frame.height, arch.frame.width);
        let mut encoder = Vec::new();
        for spec in &arch.convs {
            let fan_in = spec.in_channels * spec.kernel[0] * spec.kernel[1];
            let n = spec.out_channels * fan_in;
            encoder.push(ConvLayer {
                weight: uniform(n, fan_in),
                bias: uniform(spec.out_channels, fan_in),
                spec: spec.clone(),
            });
            (h, w) = spec
                .conv_output(h, w)
                .ok_or_else(|| Error::shape(format!("kernel of `{}` does not fit", spec.name)))?;
            c = spec.out_channels;
        }
        let mut dense =
            |name: &str, stage: Stage, fan_in: usize, out: usize, act: Activation| -> Result<DenseLayer<T>> {
                Ok(DenseLayer {
                    spec: LayerSpec::dense(name, stage, fan_in, out, act),
                    weight: Matrix::from_vec(out, fan_in, uniform(out * fan_in, fan_in))?,
                    bias: uniform(out, fan_in),
                })
            };
        let mean_head = dense("mu", Stage::MeanHead, c * h * w, arch.latent_dim, Activation::Identity)?;
        let mut decoder = Vec::new();
        let mut n = arch.latent_dim;
        for (i, &hidden) in arch.decoder_hidden.iter().enumerate() {
            decoder.push(dense(
                &format!("dec{}", i + 1),
                Stage::Decoder,
                n,
                hidden,
                Activation::Relu,
            )?);
            n = hidden;
        }
        let out = arch.frame.channels * arch.frame.height * arch.frame.width;
        decoder.push(dense("dec_out", Stage::Decoder, n, out, Activation::Identity)?);
        let vae = Self {
            frame: arch.frame,
            latent_dim: arch.latent_dim,
            encoder,
            mean_head,
            decoder,
        };
        vae.check_shapes()?;
        Ok(vae)
    }

    /// Checks the published configuration: 24×45×85 input, four conv layers
    /// ending in 2×2 maps, 50 latents.
    pub fn validate_paper_config(&self) -> Result<()> {
        if self.frame
            != (FrameShape {
                channels: CLASS_COUNT,
                height: FRAME_HEIGHT,
                width: FRAME_WIDTH,
            })
        {
            return Err(Error::shape("frame must be 24x45x85"));
        }
        if self.encoder.len() != PAPER_CONV_LAYERS {
            return Err(Error::shape(format!(
                "expected {PAPER_CONV_LAYERS} conv layers, found {}",
                self.encoder.len()
            )));
        }
        let dims = self.layer_dims();
        if dims.last().map(|&(_, h, w)| (h, w)) != Some((2, 2)) {
            return Err(Error::shape(format!(
                "fourth-layer maps must be 2x2, got {:?}",
                dims.last()
            )));
        }
        if self.latent_dim != PAPER_LATENT_DIM {
            return Err(Error::shape("latent dimension must be 50"));
        }
        Ok(())
    }

    /// `(channels, height, width)` after every conv layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize, usize)> {
        let (mut h, mut w) = (self.frame.height, self.frame.width);
        self.encoder
            .iter()
            .map(|l| {
                (h, w) = l.spec.conv_output(h, w).expect("validated at construction");
                (l.spec.out_channels, h, w)
            })
            .collect()
    }

    pub fn frame_shape(&self) -> FrameShape {
        self.frame
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn conv_layers(&self) -> &[ConvLayer<T>] {
        &self.encoder
    }

    pub fn conv_layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.encoder
    }

    pub fn mean_head(&self) -> &DenseLayer<T> {
        &self.mean_head
    }

    pub fn mean_head_mut(&mut self) -> &mut DenseLayer<T> {
        &mut self.mean_head
    }

    pub fn decoder_layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.decoder
    }

    /// Functionally identical clone whose conv layer `layer` (0-based) has its
    /// output channels reordered: new channel `k` is old channel `perm[k]`.
    pub fn permute_conv_channels(&self, layer: usize, perm: &[usize]) -> Result<Self> {
        let conv = self
            .encoder
            .get(layer)
            .ok_or_else(|| Error::invalid(format!("model has no conv layer {layer}")))?;
        let n = conv.spec.out_channels;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid(format!("not a permutation of {n} channels")));
        }
        let mut out = self.clone();
        let per_out = conv.weight.len() / n;
        let dst = &mut out.encoder[layer];
        for (k, &p) in perm.iter().enumerate() {
            dst.weight[k * per_out..(k + 1) * per_out].copy_from_slice(&conv.weight[p * per_out..(p + 1) * per_out]);
            dst.bias[k] = conv.bias[p];
        }
        if let Some(next) = self.encoder.get(layer + 1) {
            let block = next.spec.kernel[0] * next.spec.kernel[1];
            let dst = &mut out.encoder[layer + 1];
            for o in 0..next.spec.out_channels {
                for (k, &p) in perm.iter().enumerate() {
                    let to = (o * n + k) * block;
                    let from = (o * n + p) * block;
                    dst.weight[to..to + block].copy_from_slice(&next.weight[from..from + block]);
                }
            }
        } else {
            let plane = self.mean_head.weight.cols() / n;
            for r in 0..self.mean_head.weight.rows() {
                for (k, &p) in perm.iter().enumerate() {
                    for i in 0..plane {
                        out.mean_head.weight[(r, k * plane + i)] = self.mean_head.weight[(r, p * plane + i)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// One-hot network input for a class frame.
    pub fn frame_input(&self, frame: &ClassFrame) -> Result<FeatureMap<T>> {
        if frame.height() != self.frame.height
            || frame.width() != self.frame.width
            || frame.class_count() as usize != self.frame.channels
        {
            return Err(Error::shape(format!(
                "frame {}x{} with {} classes does not match model input {:?}",
                frame.height(),
                frame.width(),
                frame.class_count(),
                self.frame
            )));
        }
        FeatureMap::new(
            self.frame.channels,
            self.frame.height,
            self.frame.width,
            frame.one_hot(),
        )
    }

    /// Post-activation feature maps of every conv layer.
    pub fn conv_maps(&self, input: &FeatureMap<T>) -> Result<Vec<FeatureMap<T>>> {
        let mut maps: Vec<FeatureMap<T>> = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let next = layer.forward(maps.last().unwrap_or(input))?;
            maps.push(next);
        }
        Ok(maps)
    }

    /// Mean-path encoding with captured conv feature maps.
    pub fn encode_with_capture(&self, frame: &ClassFrame) -> Result<(Vec<T>, Vec<FeatureMap<T>>)> {
        let input = self.frame_input(frame)?;
        let maps = self.conv_maps(&input)?;
        let flat = maps.last().map_or(&input.data, |m| &m.data);
        let z = self.mean_head.forward(flat)?;
        Ok((z, maps))
    }

    pub fn encode(&self, frame: &ClassFrame) -> Result<Vec<T>> {
        Ok(self.encode_with_capture(frame)?.0)
    }

    pub fn decode(&self, z: &[T]) -> Result<Decoded<T>> {
        if z.len() != self.latent_dim {
            return Err(Error::shape(format!(
                "latent has {} entries, model expects {}",
                z.len(),
                self.latent_dim
            )));
        }
        let mut x = z.to_vec();
        for layer in &self.decoder {
            x = layer.forward(&x)?;
        }
        let (channels, plane) = (self.frame.channels, self.frame.height * self.frame.width);
        softmax_channels(&mut x, channels, plane);
        let data = channel_argmax(&x, channels, plane);
        let frame = ClassFrame::new(self.frame.height, self.frame.width, channels as u8, data)?;
        Ok(Decoded { probs: x, frame })
    }
}

/// In-place per-pixel softmax over a `channels × plane` stack.
pub fn softmax_channels<T: Real>(x: &mut [T], channels: usize, plane: usize) {
    for p in 0..plane {
        let m = (0..channels).map(|c| x[c * plane + p]).fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for c in 0..channels {
            let e = (x[c * plane + p] - m).exp();
            x[c * plane + p] = e;
            total += e;
        }
        for c in 0..channels {
            x[c * plane + p] /= total;
        }
    }
}
