use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};
use wmx_core::latentgrid::tile_frames;
use wmx_core::scenario::{attention_fixtures, render_sequence, table1_schedule, SceneSpec};
use wmx_core::store::{write_actions_csv, Palette};

use super::{leaf_dispatch, Task};
use crate::error::Result;
use crate::run::Run;

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Render the street-crossing frames, actions and attention stand-ins
    Gen(ScenarioGen),
}

leaf_dispatch!(ScenarioCmd { Gen });

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ScenarioGen {
    /// Number of frames (at most 400)
    #[arg(long, default_value_t = 400)]
    pub frames: usize,
    /// Scene population seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Render only the background bands
    #[arg(long)]
    pub empty: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const PREVIEW_TILES: usize = 4;

impl Task for ScenarioGen {
    const NAME: &'static str = "scenario gen";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let schedule = table1_schedule();
        let scene = if self.empty {
            SceneSpec::empty()
        } else {
            SceneSpec::street(self.seed)
        };
        let frames = render_sequence(&schedule, &scene, self.frames)?;
        let palette = Palette::urban();
        run.write_frames("frames", &frames, &palette)?;

        let actions = schedule.actions(self.frames)?;
        write_actions_csv(&actions, run.path("actions.csv"))?;
        run.produced("actions.csv");

        let (attention, fixations) = attention_fixtures(&frames)?;
        run.write_frames("attention", &attention, &Palette::grayscale(255))?;
        run.write_frames("fixations", &fixations, &Palette::grayscale(2))?;

        let tiles = PREVIEW_TILES.min(self.frames);
        let row = (0..tiles)
            .map(|i| frames.frame(i * self.frames / tiles))
            .collect::<wmx_core::Result<Vec<_>>>()?;
        run.write_ppm("preview.ppm", &tile_frames(&[row], &palette)?)?;
        Ok(())
    }
}
