//! `<name>.manifest.json` + `<name>.weights.bin` model container.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fnv::fnv1a64;
use super::frames::Vectorization;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DTYPE_F32: &str = "float32";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Vae,
    Lstm,
    /// Singular-vector basis of the transparent autoencoder.
    Basis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Dense,
    Lstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Encoder,
    MeanHead,
    Decoder,
    Recurrent,
    Head,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    #[default]
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => x.sigmoid(),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

fn unit_pair() -> [usize; 2] {
    [1, 1]
}

/// One layer of a stored network. Spatial parameters are `[height, width]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub stage: Stage,
    #[serde(default = "unit_pair")]
    pub kernel: [usize; 2],
    #[serde(default = "unit_pair")]
    pub stride: [usize; 2],
    #[serde(default)]
    pub padding: [usize; 2],
    #[serde(default)]
    pub activation: Activation,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl LayerSpec {
    pub fn conv(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
        activation: Activation,
    ) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Conv,
            stage: Stage::Encoder,
            kernel,
            stride,
            padding,
            activation,
            in_channels,
            out_channels,
        }
    }

    pub fn dense(name: &str, stage: Stage, in_features: usize, out_features: usize, activation: Activation) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Dense,
            stage,
            kernel: [1, 1],
            stride: [1, 1],
            padding: [0, 0],
            activation,
            in_channels: in_features,
            out_channels: out_features,
        }
    }

    pub fn lstm(name: &str, inputs: usize, cells: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Lstm,
            stage: Stage::Recurrent,
            kernel: [1, 1],
            stride: [1, 1],
            padding: [0, 0],
            activation: Activation::Tanh,
            in_channels: inputs,
            out_channels: cells,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    /// Conv output size `⌊(n + 2p − k)/s⌋ + 1` per axis, or `None` when the kernel
    /// does not fit.
    pub fn conv_output(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        let axis = |n: usize, k: usize, s: usize, p: usize| {
            let span = n + 2 * p;
            (span >= k && s > 0).then(|| (span - k) / s + 1)
        };
        Some((
            axis(height, self.kernel[0], self.stride[0], self.padding[0])?,
            axis(width, self.kernel[1], self.stride[1], self.padding[1])?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
}

impl TensorRecord {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            shape,
            dtype: DTYPE_F32.to_string(),
            byte_offset: 0,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Input frame geometry of a VAE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

/// Hyperparameters of a stored singular-vector basis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisMeta {
    pub cutoff: Option<usize>,
    pub centered: bool,
    pub reorthonormalized: bool,
    pub vectorization: Vectorization,
    pub height: usize,
    pub width: usize,
    pub class_count: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub model_kind: ModelKind,
    pub layers: Vec<LayerSpec>,
    pub tensors: Vec<TensorRecord>,
    pub latent_dim: usize,
    /// FNV-1a of the weights blob, 16 hex digits.
    #[serde(default)]
    pub checksum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisMeta>,
}

impl ModelManifest {
    pub fn new(model_kind: ModelKind, latent_dim: usize) -> Self {
        Self {
            model_kind,
            layers: Vec::new(),
            tensors: Vec::new(),
            latent_dim,
            checksum: String::new(),
            frame: None,
            cells: None,
            basis: None,
        }
    }

    pub fn record(&self, name: &str) -> Option<&TensorRecord> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// A named float32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_real<T: Real>(shape: Vec<usize>, data: &[T]) -> Result<Self> {
        Self::new(shape, data.iter().map(|v| v.as_f32()).collect())
    }

    pub fn to_real<T: Real>(&self) -> Vec<T> {
        self.data.iter().map(|&v| T::from_f32_lossy(v)).collect()
    }
}

pub type TensorMap = BTreeMap<String, Tensor>;

pub fn manifest_path(prefix: &Path) -> PathBuf {
    suffixed(prefix, ".manifest.json")
}

pub fn weights_path(prefix: &Path) -> PathBuf {
    suffixed(prefix, ".weights.bin")
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn check_records(manifest: &ModelManifest) -> Result<()> {
    let mut seen = HashSet::new();
    for rec in &manifest.tensors {
        if !seen.insert(rec.name.as_str()) {
            return Err(Error::format(
                "manifest",
                format!("duplicate tensor name `{}`", rec.name),
            ));
        }
        if rec.shape.is_empty() || rec.shape.contains(&0) {
            return Err(Error::format(
                "manifest",
                format!("tensor `{}` has non-positive shape", rec.name),
            ));
        }
        if rec.dtype != DTYPE_F32 {
            return Err(Error::Dtype(rec.dtype.clone()));
        }
    }
    Ok(())
}

/// Serializes the blob for `manifest`, filling offsets and checksum.
pub fn pack_model(manifest: &ModelManifest, tensors: &TensorMap) -> Result<(ModelManifest, Vec<u8>)> {
    check_records(manifest)?;
    for name in tensors.keys() {
        if manifest.record(name).is_none() {
            return Err(Error::shape(format!("tensor `{name}` is not declared in the manifest")));
        }
    }
    let mut out = manifest.clone();
    let mut blob = Vec::new();
    for rec in &mut out.tensors {
        let t = tensors
            .get(&rec.name)
            .ok_or_else(|| Error::MissingTensor(rec.name.clone()))?;
        if t.shape != rec.shape {
            return Err(Error::shape(format!(
                "tensor `{}` has shape {:?}, manifest declares {:?}",
                rec.name, t.shape, rec.shape
            )));
        }
        rec.byte_offset = blob.len() as u64;
        for v in &t.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.checksum = format!("{:016x}", fnv1a64(&blob));
    Ok((out, blob))
}

/// Verifies the checksum, then exposes the tensors.
pub fn unpack_model(manifest_json: &str, blob: &[u8]) -> Result<(ModelManifest, TensorMap)> {
    let manifest: ModelManifest = serde_json::from_str(manifest_json)?;
    let expected = u64::from_str_radix(&manifest.checksum, 16)
        .map_err(|_| Error::format("manifest", format!("checksum `{}` is not hex", manifest.checksum)))?;
    let actual = fnv1a64(blob);
    if expected != actual {
        return Err(Error::Checksum { expected, actual });
    }
    check_records(&manifest)?;
    let mut tensors = TensorMap::new();
    for rec in &manifest.tensors {
        let start = usize::try_from(rec.byte_offset).map_err(|_| Error::format("manifest", "offset overflow"))?;
        let len = rec.numel() * 4;
        let bytes = blob
            .get(start..start.saturating_add(len))
            .ok_or_else(|| Error::format("weights", format!("tensor `{}` exceeds blob bounds", rec.name)))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        tensors.insert(rec.name.clone(), Tensor::new(rec.shape.clone(), data)?);
    }
    Ok((manifest, tensors))
}

/// Writes `<prefix>.manifest.json` and `<prefix>.weights.bin`.
pub fn save_model(manifest: &ModelManifest, tensors: &TensorMap, prefix: impl AsRef<Path>) -> Result<ModelManifest> {
    let prefix = prefix.as_ref();
    let (packed, blob) = pack_model(manifest, tensors)?;
    let wpath = weights_path(prefix);
    std::fs::write(&wpath, &blob).map_err(|e| Error::io(&wpath, e))?;
    let mpath = manifest_path(prefix);
    let mut json = serde_json::to_string_pretty(&packed)?;
    json.push('\n');
    std::fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))?;
    Ok(packed)
}

pub fn load_model(prefix: impl AsRef<Path>) -> Result<(ModelManifest, TensorMap)> {
    let prefix = prefix.as_ref();
    let mpath = manifest_path(prefix);
    let json = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let wpath = weights_path(prefix);
    let blob = std::fs::read(&wpath).map_err(|e| Error::io(&wpath, e))?;
    unpack_model(&json, &blob)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (ModelManifest, TensorMap) {
        let mut m = ModelManifest::new(ModelKind::Lstm, 2);
        m.tensors.push(TensorRecord::new("a", vec![2, 2]));
        m.tensors.push(TensorRecord::new("b", vec![3]));
        let mut t = TensorMap::new();
        t.insert(
            "a".into(),
            Tensor::new(vec![2, 2], vec![1.0, -2.5, f32::MIN_POSITIVE, 3e7]).unwrap(),
        );
        t.insert("b".into(), Tensor::new(vec![3], vec![0.0, -0.0, 7.25]).unwrap());
        (m, t)
    }

    #[test]
    fn pack_unpack_identity() {
        let (m, t) = sample();
        let (packed, blob) = pack_model(&m, &t).unwrap();
        assert_eq!(packed.tensors[1].byte_offset, 16);
        assert_eq!(blob.len(), 28);
        let json = serde_json::to_string(&packed).unwrap();
        let (m2, t2) = unpack_model(&json, &blob).unwrap();
        assert_eq!(m2, packed);
        for (k, v) in &t {
            let bits: Vec<u32> = v.data.iter().map(|x| x.to_bits()).collect();
            let bits2: Vec<u32> = t2[k].data.iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits, bits2);
        }
    }

    #[test]
    fn missing_tensor() {
        let (m, mut t) = sample();
        t.remove("b");
        let err = pack_model(&m, &t).unwrap_err();
        assert!(err.to_string().contains("missing tensor"), "{err}");
    }

    #[test]
    fn undeclared_and_misshaped_tensors() {
        let (m, mut t) = sample();
        t.insert("c".into(), Tensor::new(vec![1], vec![0.0]).unwrap());
        assert!(matches!(pack_model(&m, &t), Err(Error::Shape(_))));
        let (m, mut t) = sample();
        t.insert("b".into(), Tensor::new(vec![1, 3], vec![0.0; 3]).unwrap());
        assert!(matches!(pack_model(&m, &t), Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_foreign_dtype() {
        let (m, t) = sample();
        let (mut packed, blob) = pack_model(&m, &t).unwrap();
        packed.tensors[0].dtype = "float64".into();
        let json = serde_json::to_string(&packed).unwrap();
        assert!(matches!(unpack_model(&json, &blob), Err(Error::Dtype(_))));
    }

    #[test]
    fn rejects_empty_manifest() {
        assert!(matches!(unpack_model("", &[]), Err(Error::Json(_))));
    }

    #[test]
    fn bit_flip_fails_checksum() {
        let (m, t) = sample();
        let (packed, mut blob) = pack_model(&m, &t).unwrap();
        blob[5] ^= 0x01;
        let json = serde_json::to_string(&packed).unwrap();
        assert!(matches!(unpack_model(&json, &blob), Err(Error::Checksum { .. })));
    }

    #[test]
    fn conv_output_formula() {
        let l = LayerSpec::conv("c", 1, 1, [4, 4], [2, 3], [1, 0], Activation::Relu);
        assert_eq!(l.conv_output(10, 8), Some((5, 2)));
        assert_eq!(l.conv_output(1, 3), None);
    }
}
