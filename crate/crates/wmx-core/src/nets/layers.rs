use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Real;
use crate::store::{LayerKind, LayerSpec, Tensor, TensorMap};

/// `channels × height × width` activation volume.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "{channels}x{height}x{width} volume needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn plane(&self, channel: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Convolution layer weights: `weight` is `[out, in, kh, kw]`.
#[derive(Debug, Clone)]
pub struct ConvLayer<T> {
    pub spec: LayerSpec,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Fully connected layer: `weight` is `out × in`.
#[derive(Debug, Clone)]
pub struct DenseLayer<T> {
    pub spec: LayerSpec,
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

fn take<T: Real>(tensors: &TensorMap, name: &str, shape: &[usize]) -> Result<Vec<T>> {
    let t = tensors
        .get(name)
        .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
    if t.shape != shape {
        return Err(Error::shape(format!(
            "tensor `{name}` has shape {:?}, layer expects {shape:?}",
            t.shape
        )));
    }
    Ok(t.to_real())
}

impl<T: Real> ConvLayer<T> {
    pub fn weight_shape(spec: &LayerSpec) -> Vec<usize> {
        vec![spec.out_channels, spec.in_channels, spec.kernel[0], spec.kernel[1]]
    }

    pub fn from_tensors(spec: &LayerSpec, tensors: &TensorMap) -> Result<Self> {
        if spec.kind != LayerKind::Conv {
            return Err(Error::shape(format!("layer `{}` is not a conv layer", spec.name)));
        }
        Ok(Self {
            weight: take(tensors, &spec.weight_name(), &Self::weight_shape(spec))?,
            bias: take(tensors, &spec.bias_name(), &[spec.out_channels])?,
            spec: spec.clone(),
        })
    }

    pub fn export(&self, tensors: &mut TensorMap) -> Result<()> {
        tensors.insert(
            self.spec.weight_name(),
            Tensor::from_real(Self::weight_shape(&self.spec), &self.weight)?,
        );
        tensors.insert(
            self.spec.bias_name(),
            Tensor::from_real(vec![self.spec.out_channels], &self.bias)?,
        );
        Ok(())
    }

    /// Zero-padded cross-correlation followed by the layer activation:
    /// `out[o,y,x] = act(b[o] + Σ W[o,c,i,j]·in[c, y·s+i−p, x·s+j−p])`.
    pub fn forward(&self, input: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        let s = &self.spec;
        if input.channels != s.in_channels {
            return Err(Error::shape(format!(
                "layer `{}` expects {} input channels, got {}",
                s.name, s.in_channels, input.channels
            )));
        }
        let (oh, ow) = s.conv_output(input.height, input.width).ok_or_else(|| {
            Error::shape(format!(
                "kernel of `{}` does not fit {}x{}",
                s.name, input.height, input.width
            ))
        })?;
        let [kh, kw] = s.kernel;
        let [sh, sw] = s.stride;
        let [ph, pw] = s.padding;
        let (ih, iw) = (input.height as isize, input.width as isize);
        let mut out = vec![T::zero(); s.out_channels * oh * ow];
        for o in 0..s.out_channels {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = self.bias[o];
                    for c in 0..s.in_channels {
                        let wbase = (o * s.in_channels + c) * kh * kw;
                        let plane = input.plane(c);
                        for i in 0..kh {
                            let yy = (y * sh + i) as isize - ph as isize;
                            if yy < 0 || yy >= ih {
                                continue;
                            }
                            let row = &plane[yy as usize * input.width..(yy as usize + 1) * input.width];
                            let wrow = &self.weight[wbase + i * kw..wbase + (i + 1) * kw];
                            for (j, &w) in wrow.iter().enumerate() {
                                let xx = (x * sw + j) as isize - pw as isize;
                                if xx >= 0 && xx < iw {
                                    acc += w * row[xx as usize];
                                }
                            }
                        }
                    }
                    out[(o * oh + y) * ow + x] = s.activation.apply(acc);
                }
            }
        }
        FeatureMap::new(s.out_channels, oh, ow, out)
    }
}

impl<T: Real> DenseLayer<T> {
    pub fn from_tensors(spec: &LayerSpec, tensors: &TensorMap) -> Result<Self> {
        if spec.kind != LayerKind::Dense {
            return Err(Error::shape(format!("layer `{}` is not a dense layer", spec.name)));
        }
        let w = take(tensors, &spec.weight_name(), &[spec.out_channels, spec.in_channels])?;
        Ok(Self {
            weight: Matrix::from_vec(spec.out_channels, spec.in_channels, w)?,
            bias: take(tensors, &spec.bias_name(), &[spec.out_channels])?,
            spec: spec.clone(),
        })
    }

    pub fn export(&self, tensors: &mut TensorMap) -> Result<()> {
        tensors.insert(
            self.spec.weight_name(),
            Tensor::from_real(
                vec![self.spec.out_channels, self.spec.in_channels],
                self.weight.as_slice(),
            )?,
        );
        tensors.insert(
            self.spec.bias_name(),
            Tensor::from_real(vec![self.spec.out_channels], &self.bias)?,
        );
        Ok(())
    }

    /// Pre-activation `W·x + b`.
    pub fn linear(&self, x: &[T]) -> Result<Vec<T>> {
        let mut y = self.weight.matvec(x)?;
        for (v, &b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        Ok(y)
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let mut y = self.linear(x)?;
        y.iter_mut().for_each(|v| *v = self.spec.activation.apply(*v));
        Ok(y)
    }
}
