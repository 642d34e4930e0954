use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use wmx_core::latentgrid::LatentEncoder;
use wmx_core::lstm_xai::{kappa_filter, mu_filter, record_trace, CellRanking, HiddenTrace, MuMode};
use wmx_core::store::{read_actions_csv, read_trace_csv, write_trace_csv};

use super::{leaf_dispatch, num, path_arg, Task};
use crate::codec::{frame_at, load_frames, load_lstm, Codec};
use crate::error::{CliError, Result};
use crate::run::Run;

#[derive(Debug, Subcommand)]
pub enum CellsCmd {
    /// Record sigmoid-normalized hidden states over a feedback rollout
    Trace(CellsTrace),
    /// Rank cells by KL divergence from a square pulse
    Kappa(CellsKappa),
    /// Rank cells by gradient similarity with an action component
    Mu(CellsMu),
}

leaf_dispatch!(CellsCmd { Trace, Kappa, Mu });

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct CellsTrace {
    /// Model prefix of the LSTM
    #[arg(long)]
    pub lstm: Option<PathBuf>,
    /// Model prefix of the VAE or basis encoding the start frame
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub actions: Option<PathBuf>,
    /// Frame whose encoding seeds the rollout
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// Rollout length; defaults to the remaining actions
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Task for CellsTrace {
    const NAME: &'static str = "cells trace";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let lp = path_arg(&self.lstm, "lstm")?;
        let ep = path_arg(&self.encoder, "encoder")?;
        let fp = path_arg(&self.frames, "frames")?;
        let ap = path_arg(&self.actions, "actions")?;
        run.model_input(lp);
        run.model_input(ep);
        run.frames_input(fp);
        run.input(ap);
        let lstm = load_lstm(lp)?;
        let codec = Codec::load(ep)?;
        let (ds, _) = load_frames(fp)?;
        let actions = read_actions_csv(ap)?;
        let available = actions.len().saturating_sub(self.start);
        let steps = self.steps.unwrap_or(available);
        if steps == 0 || steps > available {
            return Err(CliError::usage(format!(
                "{steps} steps from frame {} exceed the {} available actions",
                self.start,
                actions.len()
            )));
        }
        let acts = &actions[self.start..self.start + steps];
        let z0 = codec.encode_frame(&frame_at(&ds, self.start)?)?;
        let trace = record_trace(&lstm, &z0, acts)?;
        write_trace_csv(&trace.to_table(acts)?, run.path("trace.csv"))?;
        run.produced("trace.csv");
        Ok(())
    }
}

fn load_trace(run: &mut Run, path: &Option<PathBuf>) -> Result<(HiddenTrace<f64>, Vec<wmx_core::nets::ActionTriple>)> {
    let tp = path_arg(path, "trace")?;
    run.input(tp);
    let table = read_trace_csv(tp)?;
    Ok((HiddenTrace::from_table(&table)?, table.actions))
}

fn write_ranking(run: &mut Run, name: &str, value_column: &str, ranking: &CellRanking<f64>) -> Result<()> {
    let path = run.path(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["rank", "cell", value_column])?;
    for (i, e) in ranking.entries.iter().enumerate() {
        w.write_record([(i + 1).to_string(), e.cell.to_string(), num(e.value)])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    run.produced(name);
    Ok(())
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct CellsKappa {
    /// Trace CSV written by `cells trace`
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// First frame of the pulse
    #[arg(long, default_value_t = 80)]
    pub r1: usize,
    /// First frame after the pulse
    #[arg(long, default_value_t = 159)]
    pub r2: usize,
    /// Cells listed
    #[arg(long, default_value_t = 20)]
    pub top_n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Task for CellsKappa {
    const NAME: &'static str = "cells kappa";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let (trace, _) = load_trace(run, &self.trace)?;
        let ranking = kappa_filter(&trace, self.r1, self.r2)?.truncated(self.top_n);
        write_ranking(run, "kappa_top.csv", "kl", &ranking)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum MuModeArg {
    Min,
    MaxAbs,
}

impl From<MuModeArg> for MuMode {
    fn from(m: MuModeArg) -> Self {
        match m {
            MuModeArg::Min => MuMode::Min,
            MuModeArg::MaxAbs => MuMode::MaxAbs,
        }
    }
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct CellsMu {
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Action component: 0 movement, 1 body angle, 2 head angle
    #[arg(long, default_value_t = 2)]
    pub component: usize,
    #[arg(long, value_enum, default_value_t = MuModeArg::Min)]
    pub mode: MuModeArg,
    #[arg(long, default_value_t = 20)]
    pub top_n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Task for CellsMu {
    const NAME: &'static str = "cells mu";

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn run(&self, run: &mut Run) -> Result<()> {
        let (trace, actions) = load_trace(run, &self.trace)?;
        let ranking = mu_filter(&trace, &actions, self.component, self.mode.into())?;
        run.write_json("mu_excluded.json", &ranking.excluded)?;
        write_ranking(run, "mu_top.csv", "similarity", &ranking.truncated(self.top_n))
    }
}
