use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use wmx_core::featviz::{layer_report, ReportConfig, Upsample};

use super::{leaf_dispatch, path_arg, FormArg, Task};
use crate::codec::{frame_at, load_frames, load_vae};
use crate::error::Result;
use crate::run::Run;

#[derive(Debug, Subcommand)]
pub enum FeatvizCmd {
    /// Paired feature-map masks and eigen-maps of two VAEs on one frame
    Report(FeatvizReport),
}

leaf_dispatch!(FeatvizCmd { Report });

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum UpsampleArg {
    Bilinear,
    Nearest,
}

impl From<UpsampleArg> for Upsample {
    fn from(u: UpsampleArg) -> Self {
        match u {
            UpsampleArg::Bilinear => Upsample::Bilinear,
            UpsampleArg::Nearest => Upsample::Nearest,
        }
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct FeatvizReport {
    /// Model prefix of the first VAE
    #[arg(long)]
    pub model_a: Option<PathBuf>,
    /// Model prefix of the second VAE
    #[arg(long)]
    pub model_b: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Frame fed to both encoders
    #[arg(long, default_value_t = 0)]
    pub frame_index: usize,
    /// Deepest conv layer reported
    #[arg(long, default_value_t = 3)]
    pub max_layer: usize,
    /// Best-matching filter pairs drawn per layer
    #[arg(long, default_value_t = 4)]
    pub pairs: usize,
    /// Eigen-maps drawn per layer
    #[arg(long, default_value_t = 1)]
    pub eigen: usize,
    #[arg(long, value_enum, default_value_t = UpsampleArg::Bilinear)]
    pub upsample: UpsampleArg,
    #[arg(long, value_enum, default_value_t = FormArg::Centered)]
    pub form: FormArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PairRecord {
    a: usize,
    b: usize,
    distance: f64,
}

#[derive(Serialize)]
struct LayerRecord {
    layer: usize,
    eigen_values: Vec<f64>,
    pairs: Vec<PairRecord>,
    excluded_a: Vec<usize>,
    excluded_b: Vec<usize>,
}

impl Task for FeatvizReport {
    const NAME: &'static str = "featviz report";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let (pa, pb) = (path_arg(&self.model_a, "model_a")?, path_arg(&self.model_b, "model_b")?);
        let fp = path_arg(&self.frames, "frames")?;
        run.model_input(pa);
        run.model_input(pb);
        run.frames_input(fp);
        let (a, b) = (load_vae(pa)?, load_vae(pb)?);
        let (ds, palette) = load_frames(fp)?;
        let frame = frame_at(&ds, self.frame_index)?;
        let config = ReportConfig {
            max_layer: self.max_layer,
            pairs: self.pairs,
            eigen: self.eigen,
            upsample: self.upsample.into(),
            form: self.form.into(),
        };
        let reports = layer_report(&a, &b, &frame, &palette, run.dir(), &config)?;
        let mut records = Vec::new();
        for r in reports {
            r.files.into_iter().for_each(|f| run.produced(f));
            records.push(LayerRecord {
                layer: r.pairing.layer,
                eigen_values: r.eigen_values,
                pairs: r
                    .pairing
                    .pairs
                    .iter()
                    .map(|p| PairRecord {
                        a: p.a,
                        b: p.b,
                        distance: p.distance,
                    })
                    .collect(),
                excluded_a: r.pairing.excluded_a,
                excluded_b: r.pairing.excluded_b,
            });
        }
        run.write_json("pairing.json", &records)
    }
}
