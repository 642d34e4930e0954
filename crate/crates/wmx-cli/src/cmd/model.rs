use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wmx_core::nets::{hand_wire, DesignedCell, VaeArchitecture, WiringSpec};
use wmx_core::{Lstm64, Vae64};

use super::{leaf_dispatch, Task};
use crate::error::{CliError, Result};
use crate::run::Run;

#[derive(Debug, Subcommand)]
pub enum ModelCmd {
    /// Write a randomly initialized or hand-wired model
    Init(ModelInit),
}

leaf_dispatch!(ModelCmd { Init });

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Vae,
    Lstm,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ModelInit {
    #[arg(long, value_enum, default_value_t = KindArg::Lstm)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub latent: usize,
    /// LSTM memory cells
    #[arg(long, default_value_t = 512)]
    pub cells: usize,
    /// Weight scale of a random LSTM
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Hand-wire designed cells into the LSTM
    #[arg(long)]
    pub wired: bool,
    /// Pulse cells as `start:end` frame intervals
    #[arg(long, value_delimiter = ',')]
    pub pulse: Vec<String>,
    /// Action components followed by tracker cells
    #[arg(long, value_delimiter = ',')]
    pub tracker: Vec<usize>,
    /// Action components followed with flipped sign
    #[arg(long, value_delimiter = ',')]
    pub anti_tracker: Vec<usize>,
    /// Weight scale of the wired model's remaining cells
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Frames the pulse clock must resolve
    #[arg(long, default_value_t = 400)]
    pub horizon: usize,
    /// Shuffle every conv layer's channels of the VAE with this seed
    #[arg(long)]
    pub permute_seed: Option<u64>,
    /// File stem of the written model
    #[arg(long, default_value = "model")]
    pub name: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PlacedCell {
    Pulse { start: usize, end: usize, cell: usize },
    Tracker { component: usize, sign: f64, cell: usize },
}

#[derive(Serialize)]
struct Wiring {
    designed: Vec<PlacedCell>,
    helpers: Vec<usize>,
}

fn parse_interval(s: &str) -> Result<(usize, usize)> {
    let parsed = s
        .split_once(':')
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
    parsed.ok_or_else(|| CliError::usage(format!("pulse interval `{s}` is not `start:end`")))
}

impl ModelInit {
    fn vae(&self, run: &mut Run) -> Result<()> {
        let mut arch = VaeArchitecture::paper_default();
        arch.latent_dim = self.latent;
        let mut vae = Vae64::random(&arch, self.seed)?;
        if let Some(seed) = self.permute_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perms = Vec::new();
            for layer in 0..vae.conv_layers().len() {
                let mut perm: Vec<usize> = (0..vae.conv_layers()[layer].spec.out_channels).collect();
                perm.shuffle(&mut rng);
                vae = vae.permute_conv_channels(layer, &perm)?;
                perms.push(perm);
            }
            run.write_json("permutation.json", &perms)?;
        }
        let (manifest, tensors) = vae.to_parts()?;
        run.save_model(&self.name, &manifest, &tensors)?;
        Ok(())
    }

    fn lstm(&self, run: &mut Run) -> Result<()> {
        let lstm = if self.wired {
            let mut designed = Vec::new();
            for p in &self.pulse {
                let (start, end) = parse_interval(p)?;
                designed.push(DesignedCell::Pulse { start, end });
            }
            for (list, sign) in [(&self.tracker, 1.0), (&self.anti_tracker, -1.0)] {
                designed.extend(list.iter().map(|&component| DesignedCell::Tracker { component, sign }));
            }
            let spec = WiringSpec {
                latent_dim: self.latent,
                cells: self.cells,
                horizon: self.horizon,
                designed: designed.clone(),
                noise: self.noise,
                seed: self.seed,
            };
            let wired = hand_wire::<f64>(&spec)?;
            let placed = designed
                .iter()
                .zip(&wired.designed)
                .map(|(d, &cell)| match *d {
                    DesignedCell::Pulse { start, end } => PlacedCell::Pulse { start, end, cell },
                    DesignedCell::Tracker { component, sign } => PlacedCell::Tracker { component, sign, cell },
                })
                .collect();
            run.write_json(
                "wiring.json",
                &Wiring {
                    designed: placed,
                    helpers: wired.helpers.clone(),
                },
            )?;
            wired.lstm
        } else {
            if !self.pulse.is_empty() || !self.tracker.is_empty() || !self.anti_tracker.is_empty() {
                return Err(CliError::usage("designed cells need --wired"));
            }
            Lstm64::random(self.latent, self.cells, self.scale, self.seed)
        };
        let (manifest, tensors) = lstm.to_parts()?;
        run.save_model(&self.name, &manifest, &tensors)?;
        Ok(())
    }
}

impl Task for ModelInit {
    const NAME: &'static str = "model init";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        match self.kind {
            KindArg::Vae => self.vae(run),
            KindArg::Lstm => self.lstm(run),
        }
    }
}
