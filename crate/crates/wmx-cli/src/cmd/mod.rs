//! Subcommands. Each leaf parses into a serde-able argument struct so that
//! config-file values can be layered under explicit flags and the resolved
//! parameters echoed into the output directory.

mod cells;
mod featviz;
mod latent;
mod lrp;
mod model;
mod rgae;
mod saliency;
mod scenario;

use std::path::{Path, PathBuf};

use clap::{ArgMatches, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::run::Run;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic street-crossing scenario
    #[command(subcommand)]
    Scenario(scenario::ScenarioCmd),
    /// Create model fixtures
    #[command(subcommand)]
    Model(model::ModelCmd),
    /// Transparent SVD/FFT autoencoder
    #[command(subcommand)]
    Rgae(rgae::RgaeCmd),
    /// Convolutional feature-map visualization
    #[command(subcommand)]
    Featviz(featviz::FeatvizCmd),
    /// Latent-space perturbation grids
    #[command(subcommand)]
    Latent(latent::LatentCmd),
    /// LSTM hidden-state traces and cell filters
    #[command(subcommand)]
    Cells(cells::CellsCmd),
    /// Relevance propagation through the predictor
    #[command(subcommand)]
    Lrp(lrp::LrpCmd),
    /// Heatmap vs. attention-map scoring
    #[command(subcommand)]
    Saliency(saliency::SaliencyCmd),
}

/// A leaf subcommand.
pub trait Task: Serialize + DeserializeOwned {
    /// Command path, also the config-file section name.
    const NAME: &'static str;

    fn out(&self) -> Option<&Path>;

    fn run(&self, run: &mut Run) -> Result<()>;
}

fn execute<A: Task>(args: &A, leaf: &ArgMatches, config: &Config) -> Result<()> {
    let args: A = config.merge(args, leaf, A::NAME)?;
    let out = required(&args.out().map(Path::to_path_buf), "out")?.clone();
    let params = serde_json::to_value(&args)?;
    let mut run = Run::start(A::NAME, &out)?;
    args.run(&mut run)?;
    run.finish(&params)
}

fn leaf(matches: &ArgMatches) -> &ArgMatches {
    let mut m = matches;
    while let Some((_, sub)) = m.subcommand() {
        m = sub;
    }
    m
}

pub fn dispatch(command: Command, config: Option<&Path>, matches: &ArgMatches) -> Result<()> {
    let config = Config::load(config)?;
    let m = leaf(matches);
    match command {
        Command::Scenario(c) => c.dispatch(m, &config),
        Command::Model(c) => c.dispatch(m, &config),
        Command::Rgae(c) => c.dispatch(m, &config),
        Command::Featviz(c) => c.dispatch(m, &config),
        Command::Latent(c) => c.dispatch(m, &config),
        Command::Cells(c) => c.dispatch(m, &config),
        Command::Lrp(c) => c.dispatch(m, &config),
        Command::Saliency(c) => c.dispatch(m, &config),
    }
}

/// A parameter that may come from a flag or the config but must be present.
pub fn required<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| {
        CliError::usage(format!(
            "missing --{} (flag or config entry `{name}`)",
            name.replace('_', "-")
        ))
    })
}

pub fn path_arg<'a>(value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    required(value, name).map(PathBuf::as_path)
}

/// Formats a float for CSV output; never emits `-0`.
pub fn num(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum FormArg {
    Centered,
    Uncentered,
}

impl From<FormArg> for wmx_core::numerics::CorrelationForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Centered => Self::Centered,
            FormArg::Uncentered => Self::Uncentered,
        }
    }
}

/// Region and increment settings shared by grid-based commands.
#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// Latent entries per perturbed region
    #[arg(long, default_value_t = 10)]
    pub region_size: usize,
    /// Increment added to a region, one grid row each
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0])]
    pub increments: Vec<f64>,
}

impl GridArgs {
    pub fn config(&self, debug_zero_row: bool) -> wmx_core::latentgrid::GridConfig {
        wmx_core::latentgrid::GridConfig {
            region_size: self.region_size,
            increments: self.increments.clone(),
            debug_zero_row,
        }
    }
}

/// Relevance settings shared by `lrp` commands.
#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct RelevanceArgs {
    /// Stabilizer of the ε-rule
    #[arg(long, default_value_t = wmx_core::lstm_xai::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Latent perturbation used to map relevance to pixels
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Fraction of each latent's most affected pixels kept (1 keeps all)
    #[arg(long, default_value_t = 0.10)]
    pub top_q: f64,
}

impl RelevanceArgs {
    pub fn pixels(&self) -> wmx_core::lstm_xai::PixelMapConfig {
        wmx_core::lstm_xai::PixelMapConfig {
            delta: self.delta,
            top_q: (self.top_q < 1.0).then_some(self.top_q),
        }
    }
}

macro_rules! leaf_dispatch {
    ($enum:ident { $($variant:ident),* $(,)? }) => {
        impl $enum {
            pub fn dispatch(&self, leaf: &clap::ArgMatches, config: &crate::config::Config) -> crate::error::Result<()> {
                match self {
                    $($enum::$variant(a) => super::execute(a, leaf, config),)*
                }
            }
        }
    };
}
pub(crate) use leaf_dispatch;
