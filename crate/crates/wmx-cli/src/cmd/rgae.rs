use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wmx_core::rgae::{fit, visualize_basis, FitConfig};
use wmx_core::store::{ClassFrame, FrameDataset, Vectorization};

use super::{leaf_dispatch, num, path_arg, Task};
use crate::codec::{default_palette, load_basis, load_frames};
use crate::error::{CliError, Result};
use crate::run::Run;

#[derive(Debug, Subcommand)]
pub enum RgaeCmd {
    /// Fit a low-pass filtered singular-vector basis to a frame sample
    Fit(RgaeFit),
    /// Encode frames to latent vectors
    Encode(RgaeEncode),
    /// Decode latent vectors to frames
    Decode(RgaeDecode),
    /// Mean KL and Frobenius reconstruction error on a frame set
    Eval(RgaeEval),
    /// Images of the leading basis vectors and their spectra
    Viz(RgaeViz),
}

leaf_dispatch!(RgaeCmd {
    Fit,
    Encode,
    Decode,
    Eval,
    Viz
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum VectorizationArg {
    Intensity,
    OneHot,
}

impl From<VectorizationArg> for Vectorization {
    fn from(v: VectorizationArg) -> Self {
        match v {
            VectorizationArg::Intensity => Vectorization::Intensity,
            VectorizationArg::OneHot => Vectorization::OneHot,
        }
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct RgaeFit {
    /// Frame file to sample from
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Number of singular vectors
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Frequency bins kept per vector; omit to skip filtering
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Subtract the sample mean first
    #[arg(long)]
    pub center: bool,
    /// Re-orthonormalize the filtered vectors
    #[arg(long)]
    pub reorthonormalize: bool,
    #[arg(long, value_enum, default_value_t = VectorizationArg::Intensity)]
    pub vectorization: VectorizationArg,
    /// Use only the first N frames
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value = "basis")]
    pub name: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitSummary<'a> {
    frames: usize,
    k: usize,
    cutoff: Option<usize>,
    singular_values: &'a [f64],
}

impl Task for RgaeFit {
    const NAME: &'static str = "rgae fit";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let path = path_arg(&self.frames, "frames")?;
        run.frames_input(path);
        let (ds, _) = load_frames(path)?;
        let sample: Vec<ClassFrame> = ds.frames().take(self.sample.unwrap_or(ds.len())).collect();
        let config = FitConfig {
            k: self.k,
            cutoff: self.cutoff,
            center: self.center,
            reorthonormalize: self.reorthonormalize,
            vectorization: self.vectorization.into(),
        };
        let basis = fit::<f64>(&sample, &config)?;
        let (manifest, tensors) = basis.to_parts()?;
        run.save_model(&self.name, &manifest, &tensors)?;
        run.write_json(
            "fit.json",
            &FitSummary {
                frames: sample.len(),
                k: basis.k(),
                cutoff: self.cutoff,
                singular_values: basis.singular_values(),
            },
        )
    }
}

pub fn write_latents(path: &Path, latents: &[Vec<f64>]) -> Result<()> {
    let dim = latents.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["frame".to_string()];
    header.extend((0..dim).map(|i| format!("z{i}")));
    w.write_record(&header)?;
    for (t, z) in latents.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(z.iter().map(|&v| num(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_latents(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let dim = r.headers()?.len().saturating_sub(1);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || CliError::usage(format!("{}: malformed latent record {line}", path.display()));
        if rec.len() != dim + 1 || rec.get(0).and_then(|s| s.parse::<usize>().ok()) != Some(line) {
            return Err(bad());
        }
        let z = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        out.push(z);
    }
    Ok(out)
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct RgaeEncode {
    /// Model prefix of the basis
    #[arg(long)]
    pub basis: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Task for RgaeEncode {
    const NAME: &'static str = "rgae encode";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let (bp, fp) = (path_arg(&self.basis, "basis")?, path_arg(&self.frames, "frames")?);
        run.model_input(bp);
        run.frames_input(fp);
        let basis = load_basis(bp)?;
        let (ds, _) = load_frames(fp)?;
        let frames: Vec<ClassFrame> = ds.frames().collect();
        let latents = frames
            .par_iter()
            .map(|f| basis.encode(&basis.vectorize(f)?))
            .collect::<wmx_core::Result<Vec<_>>>()?;
        write_latents(&run.path("latents.csv"), &latents)?;
        run.produced("latents.csv");
        Ok(())
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct RgaeDecode {
    #[arg(long)]
    pub basis: Option<PathBuf>,
    /// CSV written by `rgae encode`
    #[arg(long)]
    pub latents: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Task for RgaeDecode {
    const NAME: &'static str = "rgae decode";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let (bp, lp) = (path_arg(&self.basis, "basis")?, path_arg(&self.latents, "latents")?);
        run.model_input(bp);
        run.input(lp);
        let basis = load_basis(bp)?;
        let latents = read_latents(lp)?;
        let frames = latents
            .par_iter()
            .map(|z| basis.render(&basis.decode(z)?))
            .collect::<wmx_core::Result<Vec<_>>>()?;
        if frames.is_empty() {
            return Err(CliError::usage("no latent vectors to decode"));
        }
        let ds = FrameDataset::from_frames(&frames)?;
        run.write_frames("decoded", &ds, &default_palette(basis.meta().class_count))
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct RgaeEval {
    #[arg(long)]
    pub basis: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalSummary {
    frames: usize,
    k: usize,
    cutoff: Option<usize>,
    mean_kl: f64,
    frobenius_error: f64,
}

impl Task for RgaeEval {
    const NAME: &'static str = "rgae eval";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let (bp, fp) = (path_arg(&self.basis, "basis")?, path_arg(&self.frames, "frames")?);
        run.model_input(bp);
        run.frames_input(fp);
        let basis = load_basis(bp)?;
        let (ds, _) = load_frames(fp)?;
        let frames: Vec<ClassFrame> = ds.frames().collect();
        let summary = EvalSummary {
            frames: frames.len(),
            k: basis.k(),
            cutoff: basis.meta().cutoff,
            mean_kl: basis.evaluate(&frames)?,
            frobenius_error: basis.frobenius_error(&frames)?,
        };
        run.write_json("eval.json", &summary)
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct RgaeViz {
    #[arg(long)]
    pub basis: Option<PathBuf>,
    /// Number of leading vectors drawn
    #[arg(long, default_value_t = 2)]
    pub top_k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Task for RgaeViz {
    const NAME: &'static str = "rgae viz";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let bp = path_arg(&self.basis, "basis")?;
        run.model_input(bp);
        let basis = load_basis(bp)?;
        for name in visualize_basis(&basis, self.top_k, run.dir())? {
            run.produced(name);
        }
        Ok(())
    }
}
