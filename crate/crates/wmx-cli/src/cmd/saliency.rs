use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};
use wmx_core::lstm_xai::compare_saliency;
use wmx_core::store::{ClassFrame, FrameDataset};

use super::{leaf_dispatch, path_arg, Task};
use crate::error::{CliError, Result};
use crate::run::Run;

#[derive(Debug, Subcommand)]
pub enum SaliencyCmd {
    /// NSS and Pearson correlation of heatmaps against attention maps
    Eval(SaliencyEval),
}

leaf_dispatch!(SaliencyCmd { Eval });

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct SaliencyEval {
    /// Grayscale frame file of relevance heatmaps
    #[arg(long)]
    pub heatmaps: Option<PathBuf>,
    /// Grayscale frame file of attention maps
    #[arg(long)]
    pub attention: Option<PathBuf>,
    /// Frame file of fixation masks (nonzero = fixated)
    #[arg(long)]
    pub fixations: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FrameScore {
    frame: usize,
    nss: f64,
    pearson: f64,
}

#[derive(Serialize)]
struct Skipped {
    frame: usize,
    reason: String,
}

#[derive(Serialize)]
struct Summary {
    frames: usize,
    evaluated: usize,
    mean_nss: Option<f64>,
    mean_pearson: Option<f64>,
    skipped: Vec<Skipped>,
    per_frame: Vec<FrameScore>,
}

/// Gray levels of a frame scaled to `[0, 1]`.
fn intensities(frame: &ClassFrame) -> Vec<f64> {
    let top = f64::from(frame.class_count().max(2) - 1);
    frame.pixels().iter().map(|&p| f64::from(p) / top).collect()
}

fn load(run: &mut Run, path: &Option<PathBuf>, name: &str) -> Result<FrameDataset> {
    let p = path_arg(path, name)?;
    run.frames_input(p);
    Ok(FrameDataset::read(p)?)
}

impl Task for SaliencyEval {
    const NAME: &'static str = "saliency eval";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let heat = load(run, &self.heatmaps, "heatmaps")?;
        let att = load(run, &self.attention, "attention")?;
        let fix = load(run, &self.fixations, "fixations")?;
        if heat.len() != att.len() || heat.len() != fix.len() {
            return Err(CliError::usage(format!(
                "frame counts differ: {} heatmaps, {} attention maps, {} fixation masks",
                heat.len(),
                att.len(),
                fix.len()
            )));
        }
        let mut per_frame = Vec::new();
        let mut skipped = Vec::new();
        for (t, ((h, a), f)) in heat.frames().zip(att.frames()).zip(fix.frames()).enumerate() {
            let mask: Vec<bool> = f.pixels().iter().map(|&p| p != 0).collect();
            match compare_saliency(&intensities(&h), &intensities(&a), &mask) {
                Ok(s) => per_frame.push(FrameScore {
                    frame: t,
                    nss: s.nss,
                    pearson: s.pearson,
                }),
                Err(wmx_core::Error::Shape(msg)) => return Err(CliError::usage(msg)),
                Err(e) => skipped.push(Skipped {
                    frame: t,
                    reason: e.to_string(),
                }),
            }
        }
        let mean = |f: fn(&FrameScore) -> f64| {
            (!per_frame.is_empty()).then(|| per_frame.iter().map(f).sum::<f64>() / per_frame.len() as f64)
        };
        let summary = Summary {
            frames: heat.len(),
            evaluated: per_frame.len(),
            mean_nss: mean(|s| s.nss),
            mean_pearson: mean(|s| s.pearson),
            skipped,
            per_frame,
        };
        run.write_json("saliency.json", &summary)
    }
}
