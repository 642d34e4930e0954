//! Feature-map visualization: RGB-masked maps, eigen-maps and cross-model
//! filter pairing.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nets::{FeatureMap, Vae};
use crate::numerics::{correlation_distance, fix_sign, minmax_normalize, svd, CorrelationForm, Matrix};
use crate::scalar::Real;
use crate::store::{write_ppm, ClassFrame, Palette, RgbImage};

/// Post-activation maps of one conv layer (1-based index).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMaps<T> {
    pub layer: usize,
    pub maps: FeatureMap<T>,
}

impl<T: Real> LayerMaps<T> {
    pub fn map(&self, channel: usize) -> Result<Matrix<T>> {
        if channel >= self.maps.channels {
            return Err(Error::invalid(format!("channel {channel} of {}", self.maps.channels)));
        }
        Matrix::from_vec(self.maps.height, self.maps.width, self.maps.plane(channel).to_vec())
    }
}

pub fn extract_maps<T: Real>(model: &Vae<T>, frame: &ClassFrame) -> Result<Vec<LayerMaps<T>>> {
    let (_, maps) = model.encode_with_capture(frame)?;
    Ok(maps
        .into_iter()
        .enumerate()
        .map(|(i, maps)| LayerMaps { layer: i + 1, maps })
        .collect())
}

/// How masks are resized to frame resolution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Upsample {
    /// Bilinear with aligned corners: corner pixels map to corner samples.
    #[default]
    Bilinear,
    Nearest,
}

/// Resizes an `h × w` grid to `out_h × out_w`.
pub fn upsample<T: Real>(map: &Matrix<T>, out_h: usize, out_w: usize, mode: Upsample) -> Matrix<T> {
    let (h, w) = (map.rows(), map.cols());
    let mut out = Matrix::zeros(out_h, out_w);
    let pos = |i: usize, n_in: usize, n_out: usize| -> f64 {
        if n_out <= 1 || n_in <= 1 {
            0.0
        } else {
            i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        }
    };
    for y in 0..out_h {
        for x in 0..out_w {
            out[(y, x)] = match mode {
                Upsample::Nearest => map[((y * h) / out_h, (x * w) / out_w)],
                Upsample::Bilinear => {
                    let (sy, sx) = (pos(y, h, out_h), pos(x, w, out_w));
                    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                    let (fy, fx) = (T::lit(sy - y0 as f64), T::lit(sx - x0 as f64));
                    let one = T::one();
                    let top = map[(y0, x0)] * (one - fx) + map[(y0, x1)] * fx;
                    let bottom = map[(y1, x0)] * (one - fx) + map[(y1, x1)] * fx;
                    top * (one - fy) + bottom * fy
                }
            };
        }
    }
    out
}

/// Uses a min-max normalized feature map as a weight mask over the rendered
/// frame: `round(norm_up(map) · rgb)` per pixel.
pub fn rgb_mask<T: Real>(map: &Matrix<T>, frame: &ClassFrame, palette: &Palette, mode: Upsample) -> Result<RgbImage> {
    if map.rows() == 0 || map.cols() == 0 {
        return Err(Error::shape("empty feature map"));
    }
    let norm = Matrix::from_vec(map.rows(), map.cols(), minmax_normalize(map.as_slice()))?;
    let up = upsample(&norm, frame.height(), frame.width(), mode);
    let base = frame.render(palette);
    let mut out = RgbImage::new(frame.width(), frame.height());
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            let m = up[(y, x)].max(T::zero()).min(T::one());
            let px = base
                .pixel(y, x)
                .map(|c| (m * T::lit(c as f64)).round().to_u8().unwrap_or(0));
            out.set_pixel(y, x, px);
        }
    }
    Ok(out)
}

/// Principal spatial patterns of a layer and their singular values.
#[derive(Debug, Clone)]
pub struct EigenMaps<T> {
    pub maps: Vec<Matrix<T>>,
    pub singular_values: Vec<T>,
}

/// Top right-singular vectors of the `channels × (h·w)` map stack.
pub fn eigen_maps<T: Real>(layer: &LayerMaps<T>, top_k: usize) -> Result<EigenMaps<T>> {
    let fm = &layer.maps;
    let plane = fm.height * fm.width;
    if top_k > fm.channels || top_k > plane {
        return Err(Error::invalid(format!(
            "top_k = {top_k} exceeds the {} channels of {}x{} maps",
            fm.channels, fm.height, fm.width
        )));
    }
    let stack = Matrix::from_vec(fm.channels, plane, fm.data.clone())?;
    let dec = svd(&stack)?;
    let maps = (0..top_k)
        .map(|i| {
            let mut v = dec.vt.row(i).to_vec();
            fix_sign(&mut v);
            Matrix::from_vec(fm.height, fm.width, v)
        })
        .collect::<Result<_>>()?;
    Ok(EigenMaps {
        maps,
        singular_values: dec.s[..top_k].to_vec(),
    })
}

/// One matched filter pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPair<T> {
    /// Filter in the first model.
    pub a: usize,
    /// Its closest filter in the second model.
    pub b: usize,
    pub distance: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterPairing<T> {
    pub layer: usize,
    pub pairs: Vec<FilterPair<T>>,
    /// Constant maps in the first model, left unpaired.
    pub excluded_a: Vec<usize>,
    /// Constant maps in the second model, never chosen.
    pub excluded_b: Vec<usize>,
}

impl<T: Real> FilterPairing<T> {
    /// Pairs ordered by ascending distance, ties by filter index.
    pub fn ranked(&self) -> Vec<FilterPair<T>> {
        let mut p = self.pairs.clone();
        p.sort_by(|x, y| {
            x.distance
                .partial_cmp(&y.distance)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(x.a.cmp(&y.a))
        });
        p
    }
}

fn is_constant<T: Real>(v: &[T]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Matches every filter of `a` to the filter of `b` whose feature map on the
/// same input has the smallest correlation distance (lowest index on ties).
pub fn pair_maps<T: Real>(a: &LayerMaps<T>, b: &LayerMaps<T>, form: CorrelationForm) -> Result<FilterPairing<T>> {
    let (fa, fb) = (&a.maps, &b.maps);
    if (fa.height, fa.width) != (fb.height, fb.width) {
        return Err(Error::shape(format!(
            "layer {} maps are {}x{} and {}x{}",
            a.layer, fa.height, fa.width, fb.height, fb.width
        )));
    }
    let excluded_a: Vec<usize> = (0..fa.channels).filter(|&u| is_constant(fa.plane(u))).collect();
    let excluded_b: Vec<usize> = (0..fb.channels).filter(|&v| is_constant(fb.plane(v))).collect();
    let candidates: Vec<usize> = (0..fb.channels).filter(|v| !excluded_b.contains(v)).collect();
    let pairs: Vec<Option<FilterPair<T>>> = (0..fa.channels)
        .into_par_iter()
        .map(|u| {
            if excluded_a.contains(&u) {
                return Ok(None);
            }
            let mut best: Option<FilterPair<T>> = None;
            for &v in &candidates {
                let d = correlation_distance(fa.plane(u), fb.plane(v), form)?;
                if best.is_none_or(|p| d < p.distance) {
                    best = Some(FilterPair {
                        a: u,
                        b: v,
                        distance: d,
                    });
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    Ok(FilterPairing {
        layer: a.layer,
        pairs: pairs.into_iter().flatten().collect(),
        excluded_a,
        excluded_b,
    })
}

pub fn pair_filters<T: Real>(
    model_a: &Vae<T>,
    model_b: &Vae<T>,
    layer: usize,
    frame: &ClassFrame,
    form: CorrelationForm,
) -> Result<FilterPairing<T>> {
    let pick = |m: &Vae<T>| -> Result<LayerMaps<T>> {
        extract_maps(m, frame)?
            .into_iter()
            .nth(layer.wrapping_sub(1))
            .ok_or_else(|| Error::invalid(format!("model has no conv layer {layer}")))
    };
    pair_maps(&pick(model_a)?, &pick(model_b)?, form)
}

/// What [`layer_report`] emits per layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportConfig {
    /// Highest layer reported; deeper, tiny maps are skipped.
    pub max_layer: usize,
    pub pairs: usize,
    pub eigen: usize,
    pub upsample: Upsample,
    pub form: CorrelationForm,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            max_layer: 3,
            pairs: 4,
            eigen: 1,
            upsample: Upsample::Bilinear,
            form: CorrelationForm::Centered,
        }
    }
}

/// Per-layer summary returned by [`layer_report`].
#[derive(Debug, Clone)]
pub struct LayerReport<T> {
    pub pairing: FilterPairing<T>,
    pub eigen_values: Vec<T>,
    pub files: Vec<String>,
}

/// Writes `L<l>_pair<k>.ppm` (mask of model A's filter beside its match in
/// model B) and `L<l>_eig<k>.ppm` (model A's eigen-maps as masks).
pub fn layer_report<T: Real>(
    model_a: &Vae<T>,
    model_b: &Vae<T>,
    frame: &ClassFrame,
    palette: &Palette,
    out_dir: &Path,
    config: &ReportConfig,
) -> Result<Vec<LayerReport<T>>> {
    let maps_a = extract_maps(model_a, frame)?;
    let maps_b = extract_maps(model_b, frame)?;
    let layers = maps_a.len().min(maps_b.len()).min(config.max_layer);
    let mut reports = Vec::with_capacity(layers);
    for (la, lb) in maps_a.iter().zip(&maps_b).take(layers) {
        let pairing = pair_maps(la, lb, config.form)?;
        let mut files = Vec::new();
        for (k, p) in pairing.ranked().iter().take(config.pairs).enumerate() {
            let left = rgb_mask(&la.map(p.a)?, frame, palette, config.upsample)?;
            let right = rgb_mask(&lb.map(p.b)?, frame, palette, config.upsample)?;
            let mut panel = RgbImage::new(2 * frame.width() + crate::latentgrid::SEPARATOR, frame.height());
            for y in 0..panel.height {
                for x in frame.width()..frame.width() + crate::latentgrid::SEPARATOR {
                    panel.set_pixel(y, x, [255, 255, 255]);
                }
            }
            panel.blit(&left, 0, 0);
            panel.blit(&right, 0, frame.width() + crate::latentgrid::SEPARATOR);
            let name = format!("L{}_pair{k}.ppm", la.layer);
            write_ppm(&panel, out_dir.join(&name))?;
            files.push(name);
        }
        let eig = eigen_maps(
            la,
            config.eigen.min(la.maps.channels).min(la.maps.height * la.maps.width),
        )?;
        for (k, m) in eig.maps.iter().enumerate() {
            let name = format!("L{}_eig{k}.ppm", la.layer);
            write_ppm(&rgb_mask(m, frame, palette, config.upsample)?, out_dir.join(&name))?;
            files.push(name);
        }
        reports.push(LayerReport {
            pairing,
            eigen_values: eig.singular_values,
            files,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_map_is_black() {
        let map = Matrix::from_vec(2, 2, vec![3.0f64; 4]).unwrap();
        let frame = ClassFrame::filled(45, 85, 24, 13).unwrap();
        let img = rgb_mask(&map, &frame, &Palette::urban(), Upsample::Bilinear).unwrap();
        assert!(img.data.iter().all(|&b| b == 0));
    }

    #[test]
    fn corner_max_keeps_rgb() {
        let map = Matrix::from_vec(2, 2, vec![1.0f64, 0.5, 0.5, 0.0]).unwrap();
        let frame = ClassFrame::filled(45, 85, 24, 13).unwrap();
        let pal = Palette::urban();
        for mode in [Upsample::Bilinear, Upsample::Nearest] {
            let img = rgb_mask(&map, &frame, &pal, mode).unwrap();
            assert_eq!(img.pixel(0, 0), pal.rgb(13));
            assert_eq!(img.pixel(44, 84), [0, 0, 0]);
        }
    }

    #[test]
    fn eigen_of_identical_channels() {
        let plane = vec![1.0f64, 2.0, 0.5, -1.0, 3.0, 0.0];
        let fm = FeatureMap::new(2, 2, 3, [plane.clone(), plane.clone()].concat()).unwrap();
        let e = eigen_maps(&LayerMaps { layer: 1, maps: fm }, 2).unwrap();
        assert!(e.singular_values[1].abs() < 1e-9);
        let n: f64 = e.maps[0].as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_too_large() {
        let fm = FeatureMap::new(1, 2, 2, vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert!(eigen_maps(&LayerMaps { layer: 1, maps: fm }, 2).is_err());
    }

    #[test]
    fn constant_maps_are_excluded() {
        let a = FeatureMap::new(2, 1, 3, vec![1.0f64, 2.0, 3.0, 5.0, 5.0, 5.0]).unwrap();
        let la = LayerMaps { layer: 1, maps: a };
        let p = pair_maps(&la, &la, CorrelationForm::Centered).unwrap();
        assert_eq!(p.excluded_a, vec![1]);
        assert_eq!(p.pairs.len(), 1);
        assert_eq!((p.pairs[0].a, p.pairs[0].b), (0, 0));
    }
}
