use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};
use wmx_core::latentgrid::{build_grid, grid_montage, LatentEncoder};

use super::{leaf_dispatch, path_arg, GridArgs, Task};
use crate::codec::{frame_at, load_frames, Codec};
use crate::error::Result;
use crate::run::Run;

#[derive(Debug, Subcommand)]
pub enum LatentCmd {
    /// Decode region-wise perturbations of encoded frames
    Grid(LatentGridArgs),
}

leaf_dispatch!(LatentCmd { Grid });

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct LatentGridArgs {
    /// Model prefix of a VAE or basis
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Frames to encode, one grid each
    #[arg(long, value_delimiter = ',', default_values_t = [0usize])]
    pub frame_index: Vec<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    /// Append an unperturbed row
    #[arg(long)]
    pub debug_zero_row: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct GridRecord<'a> {
    frame: usize,
    rows: usize,
    cols: usize,
    increments: &'a [f64],
    region_size: usize,
    source: &'a [f64],
}

impl Task for LatentGridArgs {
    const NAME: &'static str = "latent grid";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let (mp, fp) = (path_arg(&self.model, "model")?, path_arg(&self.frames, "frames")?);
        run.model_input(mp);
        run.frames_input(fp);
        let codec = Codec::load(mp)?;
        let (ds, palette) = load_frames(fp)?;
        let config = self.grid.config(self.debug_zero_row);
        for &index in &self.frame_index {
            let z = codec.encode_frame(&frame_at(&ds, index)?)?;
            let grid = build_grid(&codec, &z, &config)?;
            let stem = format!("grid_f{index}");
            run.write_ppm(&format!("{stem}.ppm"), &grid_montage(&grid, &palette)?)?;
            run.write_frames(&stem, &grid.to_dataset()?, &palette)?;
            run.write_json(
                &format!("{stem}.json"),
                &GridRecord {
                    frame: index,
                    rows: grid.rows(),
                    cols: grid.cols(),
                    increments: &grid.increments,
                    region_size: grid.region_size,
                    source: &grid.source,
                },
            )?;
        }
        Ok(())
    }
}
