//! Feeding latent-grid cells to the predictor and flagging implausible
//! next-frame predictions.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lrp::lrp;
use super::pixels::{relevance_to_pixels, PixelMapConfig, RelevanceHeatmap};
use crate::error::{Error, Result};
use crate::latentgrid::{LatentDecoder, LatentGrid};
use crate::nets::{ActionTriple, Lstm, LstmState};
use crate::scalar::Real;
use crate::store::{write_ppm, ClassFrame, Palette};

/// One probe input: a latent vector and a label for the emitted files.
#[derive(Debug, Clone)]
pub struct ProbeInput<T> {
    pub name: String,
    pub z: Vec<T>,
}

/// Probe inputs for every cell of a grid, named `r<row>c<col>`.
pub fn grid_inputs<T: Real>(grid: &LatentGrid<T>) -> Result<Vec<ProbeInput<T>>> {
    let mut out = Vec::with_capacity(grid.rows() * grid.cols());
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            out.push(ProbeInput {
                name: format!("r{r}c{c}"),
                z: grid.cell_latent(r, c)?,
            });
        }
    }
    Ok(out)
}

/// Class-count change for one class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub class: u8,
    pub name: String,
    pub input: usize,
    pub predicted: usize,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellAnomaly {
    pub cell: String,
    /// Classes present in the prediction but not in the input.
    pub appeared: Vec<u8>,
    /// Classes present in the input but missing from the prediction.
    pub vanished: Vec<u8>,
    pub deltas: Vec<ClassDelta>,
}

impl CellAnomaly {
    pub fn is_anomalous(&self) -> bool {
        !(self.appeared.is_empty() && self.vanished.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub anomalous_cells: usize,
    pub cells: Vec<CellAnomaly>,
}

/// Compares class histograms of an input and a predicted frame.
pub fn class_changes(name: &str, input: &ClassFrame, predicted: &ClassFrame, palette: &Palette) -> CellAnomaly {
    let (a, b) = (input.histogram(), predicted.histogram());
    let n = a.len().max(b.len());
    let count = |h: &[usize], k: usize| h.get(k).copied().unwrap_or(0);
    let mut out = CellAnomaly {
        cell: name.to_string(),
        appeared: Vec::new(),
        vanished: Vec::new(),
        deltas: Vec::new(),
    };
    for k in 0..n {
        let (x, y) = (count(&a, k), count(&b, k));
        if x == y {
            continue;
        }
        let class = k as u8;
        if x == 0 {
            out.appeared.push(class);
        }
        if y == 0 {
            out.vanished.push(class);
        }
        out.deltas.push(ClassDelta {
            class,
            name: palette.name(class).to_string(),
            input: x,
            predicted: y,
            delta: y as i64 - x as i64,
        });
    }
    out
}

#[derive(Debug, Clone)]
pub struct ProbeCell<T> {
    pub name: String,
    pub input_frame: ClassFrame,
    pub predicted_z: Vec<T>,
    pub predicted_frame: ClassFrame,
    pub heatmap: RelevanceHeatmap<T>,
    pub anomaly: CellAnomaly,
}

#[derive(Debug, Clone)]
pub struct ProbeResult<T> {
    pub cells: Vec<ProbeCell<T>>,
    pub report: AnomalyReport,
}

/// Settings shared by every probed cell.
#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    pub action: ActionTriple,
    pub epsilon: f64,
    pub pixels: PixelMapConfig,
}

/// One prediction step from a zero state per input; LRP relevance on the
/// input latent is mapped to pixels through the decoder.
pub fn grid_probe<T: Real, D: LatentDecoder<T> + ?Sized>(
    lstm: &Lstm<T>,
    decoder: &D,
    inputs: &[ProbeInput<T>],
    palette: &Palette,
    config: &ProbeConfig,
) -> Result<ProbeResult<T>> {
    if lstm.latent_dim() != decoder.latent_dim() {
        return Err(Error::shape(format!(
            "predictor latent {} does not match decoder latent {}",
            lstm.latent_dim(),
            decoder.latent_dim()
        )));
    }
    let cells: Vec<ProbeCell<T>> = inputs
        .par_iter()
        .map(|inp| {
            let cap = lstm.step(&LstmState::zeros(lstm.cells()), &inp.z, &config.action)?;
            let rel = lrp(lstm, &cap, T::lit(config.epsilon))?;
            let heatmap = relevance_to_pixels(decoder, &inp.z, &rel.r_z, &config.pixels)?;
            let input_frame = decoder.decode_frame(&inp.z)?;
            let predicted_frame = decoder.decode_frame(&cap.output)?;
            let anomaly = class_changes(&inp.name, &input_frame, &predicted_frame, palette);
            Ok(ProbeCell {
                name: inp.name.clone(),
                input_frame,
                predicted_z: cap.output,
                predicted_frame,
                heatmap,
                anomaly,
            })
        })
        .collect::<Result<_>>()?;
    let report = AnomalyReport {
        anomalous_cells: cells.iter().filter(|c| c.anomaly.is_anomalous()).count(),
        cells: cells.iter().map(|c| c.anomaly.clone()).collect(),
    };
    Ok(ProbeResult { cells, report })
}

/// Writes `pred_<name>.ppm`, `lrp_<name>.ppm` per cell and `anomaly_report.json`.
pub fn write_probe<T: Real>(result: &ProbeResult<T>, palette: &Palette, out_dir: &Path) -> Result<Vec<String>> {
    let mut files = Vec::with_capacity(2 * result.cells.len() + 1);
    for c in &result.cells {
        let name = format!("pred_{}.ppm", c.name);
        write_ppm(&c.predicted_frame.render(palette), out_dir.join(&name))?;
        files.push(name);
        let name = format!("lrp_{}.ppm", c.name);
        write_ppm(&c.heatmap.to_image(), out_dir.join(&name))?;
        files.push(name);
    }
    let name = "anomaly_report.json".to_string();
    let path = out_dir.join(&name);
    let text = serde_json::to_string_pretty(&result.report)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    files.push(name);
    Ok(files)
}
