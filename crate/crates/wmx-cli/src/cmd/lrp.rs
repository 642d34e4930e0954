use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wmx_core::latentgrid::{build_grid, grid_montage, LatentEncoder};
use wmx_core::lstm_xai::{grid_inputs, grid_probe, lrp, relevance_to_pixels, write_probe, ProbeConfig};
use wmx_core::nets::{ActionTriple, Drive};
use wmx_core::store::{read_actions_csv, ClassFrame, FrameDataset, Palette};

use super::{leaf_dispatch, num, path_arg, GridArgs, RelevanceArgs, Task};
use crate::codec::{frame_at, load_frames, load_lstm, Codec};
use crate::error::{CliError, Result};
use crate::run::Run;

#[derive(Debug, Subcommand)]
pub enum LrpCmd {
    /// Relevance heatmaps for scenario steps under teacher forcing
    Step(LrpStep),
    /// Predict from every latent-grid cell and flag implausible changes
    Probe(LrpProbe),
}

leaf_dispatch!(LrpCmd { Step, Probe });

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct LrpStep {
    /// Model prefix of the LSTM
    #[arg(long)]
    pub lstm: Option<PathBuf>,
    /// Model prefix of the VAE or basis
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub actions: Option<PathBuf>,
    /// Steps explained; all steps when omitted
    #[arg(long, value_delimiter = ',')]
    pub steps: Vec<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub relevance: RelevanceArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const RELEVANCE_HEADER: [&str; 10] = [
    "step",
    "injected",
    "recovered",
    "bias_absorbed",
    "epsilon_absorbed",
    "leaked",
    "r_z",
    "r_a0",
    "r_a1",
    "r_a2",
];

impl Task for LrpStep {
    const NAME: &'static str = "lrp step";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let lp = path_arg(&self.lstm, "lstm")?;
        let mp = path_arg(&self.model, "model")?;
        let fp = path_arg(&self.frames, "frames")?;
        let ap = path_arg(&self.actions, "actions")?;
        run.model_input(lp);
        run.model_input(mp);
        run.frames_input(fp);
        run.input(ap);
        let lstm = load_lstm(lp)?;
        let codec = Codec::load(mp)?;
        let (ds, _) = load_frames(fp)?;
        let actions = read_actions_csv(ap)?;
        let n = ds.len().min(actions.len());
        if n == 0 {
            return Err(CliError::usage("no frames to explain"));
        }
        let mut steps = if self.steps.is_empty() {
            (0..n).collect()
        } else {
            self.steps.clone()
        };
        steps.sort_unstable();
        steps.dedup();
        if let Some(&bad) = steps.iter().find(|&&t| t >= n) {
            return Err(CliError::usage(format!("step {bad} out of range ({n} steps)")));
        }

        let frames: Vec<ClassFrame> = ds.frames().take(n).collect();
        let latents = frames
            .par_iter()
            .map(|f| codec.encode_frame(f))
            .collect::<wmx_core::Result<Vec<_>>>()?;
        let rollout = lstm.rollout(&latents[0], &actions[..n], Drive::Teacher(&latents))?;
        let eps = self.relevance.epsilon;
        let pixels = self.relevance.pixels();
        let explained = steps
            .par_iter()
            .map(|&t| {
                let rel = lrp(&lstm, &rollout.steps[t], eps)?;
                let heatmap = relevance_to_pixels(&codec, &latents[t], &rel.r_z, &pixels)?;
                Ok((rel, heatmap))
            })
            .collect::<wmx_core::Result<Vec<_>>>()?;

        let path = run.path("relevance.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(RELEVANCE_HEADER)?;
        let mut maps = Vec::with_capacity(steps.len());
        for (&t, (rel, heatmap)) in steps.iter().zip(&explained) {
            let mut rec = vec![
                t.to_string(),
                num(rel.injected),
                num(rel.recovered),
                num(rel.bias_absorbed),
                num(rel.epsilon_absorbed),
                num(rel.leaked),
                num(rel.r_z.iter().sum()),
            ];
            rec.extend(rel.r_a.iter().map(|&v| num(v)));
            w.write_record(&rec)?;
            run.write_ppm(&format!("lrp_{t}.ppm"), &heatmap.to_image())?;
            maps.push(heatmap.to_frame()?);
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
        run.produced("relevance.csv");
        run.write_frames("heatmaps", &FrameDataset::from_frames(&maps)?, &Palette::grayscale(255))
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct LrpProbe {
    #[arg(long)]
    pub lstm: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Frame whose encoding is perturbed into the grid
    #[arg(long, default_value_t = 0)]
    pub frame_index: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    /// Action fed with every probe, as `a0,a1,a2`
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 180.0, 0.0])]
    pub action: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub relevance: RelevanceArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Task for LrpProbe {
    const NAME: &'static str = "lrp probe";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let lp = path_arg(&self.lstm, "lstm")?;
        let mp = path_arg(&self.model, "model")?;
        let fp = path_arg(&self.frames, "frames")?;
        run.model_input(lp);
        run.model_input(mp);
        run.frames_input(fp);
        let &[a0, a1, a2] = self.action.as_slice() else {
            return Err(CliError::usage("--action takes exactly three values"));
        };
        let lstm = load_lstm(lp)?;
        let codec = Codec::load(mp)?;
        let (ds, palette) = load_frames(fp)?;
        let z = codec.encode_frame(&frame_at(&ds, self.frame_index)?)?;
        let grid = build_grid(&codec, &z, &self.grid.config(false))?;
        run.write_ppm(
            &format!("grid_f{}.ppm", self.frame_index),
            &grid_montage(&grid, &palette)?,
        )?;
        let config = ProbeConfig {
            action: ActionTriple::new(a0, a1, a2),
            epsilon: self.relevance.epsilon,
            pixels: self.relevance.pixels(),
        };
        let result = grid_probe(&lstm, &codec, &grid_inputs(&grid)?, &palette, &config)?;
        for name in write_probe(&result, &palette, run.dir())? {
            run.produced(name);
        }
        Ok(())
    }
}
