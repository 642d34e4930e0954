//! Hidden-state traces and the κ (interval) and μ (action-gradient) cell filters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{ActionTriple, Drive, Lstm};
use crate::numerics::{
    cosine_similarity, heaviside_pulse, kl_divergence, norm2, temporal_gradient, Matrix, KL_EPSILON,
};
use crate::scalar::Real;
use crate::store::TraceTable;

/// `T × C` matrix of sigmoid-normalized hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTrace<T> {
    values: Matrix<T>,
}

impl<T: Real> HiddenTrace<T> {
    /// Wraps already-normalized values; every entry must lie in `[0, 1]`.
    pub fn new(values: Matrix<T>) -> Result<Self> {
        if values.as_slice().iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::invalid("trace values must lie in [0, 1]"));
        }
        Ok(Self { values })
    }

    /// Sigmoid-normalizes raw hidden states.
    pub fn from_raw(raw: &Matrix<T>) -> Self {
        Self {
            values: raw.map(|v| v.sigmoid()),
        }
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn cells(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn cell(&self, c: usize) -> Vec<T> {
        self.values.col(c)
    }

    pub fn to_table(&self, actions: &[ActionTriple]) -> Result<TraceTable> {
        if actions.len() != self.frames() {
            return Err(Error::shape(format!(
                "{} actions for {} frames",
                actions.len(),
                self.frames()
            )));
        }
        Ok(TraceTable {
            frames: self.frames(),
            cells: self.cells(),
            values: self.values.as_slice().iter().map(|v| v.as_f64()).collect(),
            actions: actions.to_vec(),
        })
    }

    pub fn from_table(table: &TraceTable) -> Result<Self> {
        let data = table.values.iter().map(|&v| T::lit(v)).collect();
        Self::new(Matrix::from_vec(table.frames, table.cells, data)?)
    }
}

/// Runs a feedback rollout and records the normalized hidden states.
pub fn record_trace<T: Real>(lstm: &Lstm<T>, z0: &[T], actions: &[ActionTriple]) -> Result<HiddenTrace<T>> {
    let run = lstm.rollout(z0, actions, Drive::Feedback)?;
    Ok(HiddenTrace::from_raw(&run.hidden_matrix()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Kappa,
    Mu,
}

/// Ordering used by the μ filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuMode {
    /// Most negative similarity first.
    #[default]
    Min,
    /// Largest `|similarity|` first.
    MaxAbs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedCell<T> {
    pub cell: usize,
    /// Ranking key; non-decreasing along the list.
    pub score: T,
    /// The underlying statistic: KL for κ, cosine similarity for μ.
    pub value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRanking<T> {
    pub kind: FilterKind,
    pub entries: Vec<RankedCell<T>>,
    /// Cells left out (zero temporal gradient under μ).
    pub excluded: Vec<usize>,
}

impl<T: Real> CellRanking<T> {
    pub fn top(&self) -> Option<usize> {
        self.entries.first().map(|e| e.cell)
    }

    /// Rank (0-based) of a cell, if ranked.
    pub fn position(&self, cell: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.cell == cell)
    }

    pub fn truncated(mut self, top_n: usize) -> Self {
        self.entries.truncate(top_n);
        self
    }
}

fn rank<T: Real>(kind: FilterKind, mut entries: Vec<RankedCell<T>>, excluded: Vec<usize>) -> CellRanking<T> {
    entries.sort_by(|a, b| {
        a.score
            .partial_cmp(&b.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cell.cmp(&b.cell))
    });
    CellRanking {
        kind,
        entries,
        excluded,
    }
}

/// KL between a cell's time-normalized trace and the smoothed pulse on `[r1, r2)`.
pub fn kappa_score<T: Real>(series: &[T], pulse: &[T]) -> Result<T> {
    kl_divergence(series, pulse, T::lit(KL_EPSILON))
}

/// Ranks all cells by ascending [`kappa_score`].
pub fn kappa_filter<T: Real>(trace: &HiddenTrace<T>, r1: usize, r2: usize) -> Result<CellRanking<T>> {
    let n = trace.frames();
    if n == 0 || trace.cells() == 0 {
        return Err(Error::invalid("empty trace"));
    }
    if r1 >= r2 || r2 > n {
        return Err(Error::invalid(format!(
            "interval [{r1}, {r2}) must satisfy r1 < r2 <= {n}"
        )));
    }
    let pulse: Vec<T> = heaviside_pulse(n, r1, r2)?;
    let entries = (0..trace.cells())
        .into_par_iter()
        .map(|c| {
            let kl = kappa_score(&trace.cell(c), &pulse)?;
            Ok(RankedCell {
                cell: c,
                score: kl,
                value: kl,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rank(FilterKind::Kappa, entries, Vec::new()))
}

/// Ranks cells by the cosine similarity of their temporal gradient with the
/// gradient of action component `component`.
pub fn mu_filter<T: Real>(
    trace: &HiddenTrace<T>,
    actions: &[ActionTriple],
    component: usize,
    mode: MuMode,
) -> Result<CellRanking<T>> {
    if actions.len() != trace.frames() {
        return Err(Error::shape(format!(
            "{} actions for {} frames",
            actions.len(),
            trace.frames()
        )));
    }
    let series: Vec<T> = actions
        .iter()
        .map(|a| a.component(component).map(T::lit))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::invalid(format!("action component {component} does not exist")))?;
    let da = temporal_gradient(&series)?;
    if norm2(&da) == T::zero() {
        return Err(Error::Undefined(format!("action component {component} never changes")));
    }
    let scored: Vec<(usize, Option<T>)> = (0..trace.cells())
        .into_par_iter()
        .map(|c| {
            let dh = temporal_gradient(&trace.cell(c))?;
            if norm2(&dh) == T::zero() {
                return Ok((c, None));
            }
            Ok((c, Some(cosine_similarity(&dh, &da)?)))
        })
        .collect::<Result<_>>()?;
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for (cell, s) in scored {
        match s {
            None => excluded.push(cell),
            Some(s) => entries.push(RankedCell {
                cell,
                score: match mode {
                    MuMode::Min => s,
                    MuMode::MaxAbs => -s.abs(),
                },
                value: s,
            }),
        }
    }
    if entries.is_empty() {
        return Err(Error::Undefined("every cell has a zero temporal gradient".into()));
    }
    Ok(rank(FilterKind::Mu, entries, excluded))
}
