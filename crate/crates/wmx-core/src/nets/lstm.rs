//! Single-layer LSTM world-model predictor with full state capture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Real;
use crate::store::{
    Activation, LayerKind, LayerSpec, ModelKind, ModelManifest, Stage, Tensor, TensorMap, TensorRecord,
};

pub const PAPER_CELLS: usize = 512;
pub const ACTION_DIM: usize = 3;

/// Gate block order inside the stacked `4C` weight rows.
pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CANDIDATE: usize = 2;
pub const GATE_OUTPUT: usize = 3;

const W_IH: &str = "lstm.w_ih";
const W_HH: &str = "lstm.w_hh";
const BIAS: &str = "lstm.bias";
const HEAD_W: &str = "head.weight";
const HEAD_B: &str = "head.bias";

/// Pedestrian action: movement flag, body angle and head angle (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActionTriple {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl ActionTriple {
    pub const fn new(a0: f64, a1: f64, a2: f64) -> Self {
        Self { a0, a1, a2 }
    }

    pub fn component(&self, j: usize) -> Option<f64> {
        match j {
            0 => Some(self.a0),
            1 => Some(self.a1),
            2 => Some(self.a2),
            _ => None,
        }
    }

    /// Network encoding: the flag as-is, angles divided by 360.
    pub fn to_input<T: Real>(&self) -> [T; ACTION_DIM] {
        [T::lit(self.a0), T::lit(self.a1 / 360.0), T::lit(self.a2 / 360.0)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(cells: usize) -> Self {
        Self {
            h: vec![T::zero(); cells],
            c: vec![T::zero(); cells],
        }
    }
}

/// Everything computed during one step.
#[derive(Debug, Clone)]
pub struct StepCapture<T> {
    /// `z ⊕ a` as fed to the cell.
    pub input: Vec<T>,
    pub prev: LstmState<T>,
    /// Stacked gate pre-activations, `4C`.
    pub pre: Vec<T>,
    pub input_gate: Vec<T>,
    pub forget_gate: Vec<T>,
    pub candidate: Vec<T>,
    pub output_gate: Vec<T>,
    pub state: LstmState<T>,
    /// Predicted next latent.
    pub output: Vec<T>,
}

/// How step inputs are chosen during a rollout.
#[derive(Debug, Clone, Copy)]
pub enum Drive<'a, T> {
    /// Each prediction becomes the next step's latent input.
    Feedback,
    /// Latent inputs come from the given sequence (index `t` feeds step `t`).
    Teacher(&'a [Vec<T>]),
}

#[derive(Debug, Clone)]
pub struct Rollout<T> {
    pub predictions: Vec<Vec<T>>,
    pub steps: Vec<StepCapture<T>>,
}

impl<T: Real> Rollout<T> {
    /// Raw hidden states as a `T × C` matrix.
    pub fn hidden_matrix(&self) -> Matrix<T> {
        let rows: Vec<Vec<T>> = self.steps.iter().map(|s| s.state.h.clone()).collect();
        Matrix::from_rows(&rows).expect("rollout has at least one step")
    }
}

#[derive(Debug, Clone)]
pub struct Lstm<T> {
    latent_dim: usize,
    cells: usize,
    /// `4C × (latent + 3)`
    pub w_ih: Matrix<T>,
    /// `4C × C`
    pub w_hh: Matrix<T>,
    /// `4C`
    pub bias: Vec<T>,
    /// `latent × C`
    pub head_w: Matrix<T>,
    pub head_b: Vec<T>,
}

impl<T: Real> Lstm<T> {
    pub fn zeros(latent_dim: usize, cells: usize) -> Self {
        let inputs = latent_dim + ACTION_DIM;
        Self {
            latent_dim,
            cells,
            w_ih: Matrix::zeros(4 * cells, inputs),
            w_hh: Matrix::zeros(4 * cells, cells),
            bias: vec![T::zero(); 4 * cells],
            head_w: Matrix::zeros(latent_dim, cells),
            head_b: vec![T::zero(); latent_dim],
        }
    }

    /// Uniform weights in `±scale/√fan_in`.
    pub fn random(latent_dim: usize, cells: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(latent_dim, cells);
        let b_in = scale / ((latent_dim + ACTION_DIM + cells) as f64).sqrt();
        for v in m
            .w_ih
            .as_mut_slice()
            .iter_mut()
            .chain(m.w_hh.as_mut_slice())
            .chain(&mut m.bias)
        {
            *v = T::lit(rng.gen_range(-b_in..=b_in));
        }
        let b_out = scale / (cells as f64).sqrt();
        for v in m.head_w.as_mut_slice().iter_mut().chain(&mut m.head_b) {
            *v = T::lit(rng.gen_range(-b_out..=b_out));
        }
        m
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn input_dim(&self) -> usize {
        self.latent_dim + ACTION_DIM
    }

    /// Row of gate `gate` for cell `cell` in the stacked matrices.
    #[inline]
    pub fn gate_row(&self, gate: usize, cell: usize) -> usize {
        gate * self.cells + cell
    }

    pub fn from_parts(manifest: &ModelManifest, tensors: &TensorMap) -> Result<Self> {
        if manifest.model_kind != ModelKind::Lstm {
            return Err(Error::shape("manifest does not describe an LSTM"));
        }
        let cells = manifest
            .cells
            .ok_or_else(|| Error::shape("LSTM manifest lacks a cell count"))?;
        let latent = manifest.latent_dim;
        let inputs = latent + ACTION_DIM;
        let [rec, head] = manifest.layers.as_slice() else {
            return Err(Error::shape(
                "LSTM manifest must list an lstm layer followed by a dense head",
            ));
        };
        if rec.kind != LayerKind::Lstm || rec.in_channels != inputs || rec.out_channels != cells {
            return Err(Error::shape(format!(
                "recurrent layer must map {inputs} inputs to {cells} cells"
            )));
        }
        if head.kind != LayerKind::Dense || head.in_channels != cells || head.out_channels != latent {
            return Err(Error::shape(format!("head must map {cells} cells to {latent} latents")));
        }
        let get = |name: &str, shape: &[usize]| -> Result<Vec<T>> {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
            if t.shape != shape {
                return Err(Error::shape(format!(
                    "tensor `{name}` has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            Ok(t.to_real())
        };
        Ok(Self {
            latent_dim: latent,
            cells,
            w_ih: Matrix::from_vec(4 * cells, inputs, get(W_IH, &[4 * cells, inputs])?)?,
            w_hh: Matrix::from_vec(4 * cells, cells, get(W_HH, &[4 * cells, cells])?)?,
            bias: get(BIAS, &[4 * cells])?,
            head_w: Matrix::from_vec(latent, cells, get(HEAD_W, &[latent, cells])?)?,
            head_b: get(HEAD_B, &[latent])?,
        })
    }

    pub fn to_parts(&self) -> Result<(ModelManifest, TensorMap)> {
        let (c, l, n) = (self.cells, self.latent_dim, self.input_dim());
        let mut manifest = ModelManifest::new(ModelKind::Lstm, l);
        manifest.cells = Some(c);
        manifest.layers = vec![
            LayerSpec::lstm("lstm", n, c),
            LayerSpec::dense("head", Stage::Head, c, l, Activation::Identity),
        ];
        let mut tensors = TensorMap::new();
        tensors.insert(W_IH.into(), Tensor::from_real(vec![4 * c, n], self.w_ih.as_slice())?);
        tensors.insert(W_HH.into(), Tensor::from_real(vec![4 * c, c], self.w_hh.as_slice())?);
        tensors.insert(BIAS.into(), Tensor::from_real(vec![4 * c], &self.bias)?);
        tensors.insert(HEAD_W.into(), Tensor::from_real(vec![l, c], self.head_w.as_slice())?);
        tensors.insert(HEAD_B.into(), Tensor::from_real(vec![l], &self.head_b)?);
        manifest.tensors = tensors
            .iter()
            .map(|(k, t)| TensorRecord::new(k.clone(), t.shape.clone()))
            .collect();
        Ok((manifest, tensors))
    }

    /// One step on a raw `z ⊕ a` input:
    /// `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f∘c + i∘g`, `h' = o∘tanh(c')`, `ẑ = W h' + b`.
    pub fn step_input(&self, state: &LstmState<T>, input: &[T]) -> Result<StepCapture<T>> {
        if input.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "step input has {} entries, expected {}",
                input.len(),
                self.input_dim()
            )));
        }
        if state.h.len() != self.cells || state.c.len() != self.cells {
            return Err(Error::shape("state size does not match cell count"));
        }
        let mut pre = self.w_ih.matvec(input)?;
        let rec = self.w_hh.matvec(&state.h)?;
        for ((p, r), b) in pre.iter_mut().zip(rec).zip(&self.bias) {
            *p += r + *b;
        }
        let block = |g: usize| &pre[g * self.cells..(g + 1) * self.cells];
        let input_gate: Vec<T> = block(GATE_INPUT).iter().map(|v| v.sigmoid()).collect();
        let forget_gate: Vec<T> = block(GATE_FORGET).iter().map(|v| v.sigmoid()).collect();
        let candidate: Vec<T> = block(GATE_CANDIDATE).iter().map(|v| v.tanh()).collect();
        let output_gate: Vec<T> = block(GATE_OUTPUT).iter().map(|v| v.sigmoid()).collect();
        let c: Vec<T> = (0..self.cells)
            .map(|k| forget_gate[k] * state.c[k] + input_gate[k] * candidate[k])
            .collect();
        let h: Vec<T> = (0..self.cells).map(|k| output_gate[k] * c[k].tanh()).collect();
        let mut output = self.head_w.matvec(&h)?;
        for (o, &b) in output.iter_mut().zip(&self.head_b) {
            *o += b;
        }
        Ok(StepCapture {
            input: input.to_vec(),
            prev: state.clone(),
            pre,
            input_gate,
            forget_gate,
            candidate,
            output_gate,
            state: LstmState { h, c },
            output,
        })
    }

    pub fn step(&self, state: &LstmState<T>, z: &[T], action: &ActionTriple) -> Result<StepCapture<T>> {
        if z.len() != self.latent_dim {
            return Err(Error::shape(format!(
                "latent has {} entries, expected {}",
                z.len(),
                self.latent_dim
            )));
        }
        let mut input = z.to_vec();
        input.extend_from_slice(&action.to_input::<T>());
        self.step_input(state, &input)
    }

    /// Runs `actions.len()` steps from a zero state.
    pub fn rollout(&self, z0: &[T], actions: &[ActionTriple], drive: Drive<'_, T>) -> Result<Rollout<T>> {
        if actions.is_empty() {
            return Err(Error::invalid("rollout needs at least one step"));
        }
        if let Drive::Teacher(zs) = drive {
            if zs.len() < actions.len() {
                return Err(Error::shape(format!(
                    "teacher sequence has {} latents for {} steps",
                    zs.len(),
                    actions.len()
                )));
            }
        }
        let mut state = LstmState::zeros(self.cells);
        let mut z = z0.to_vec();
        let mut predictions = Vec::with_capacity(actions.len());
        let mut steps = Vec::with_capacity(actions.len());
        for (t, a) in actions.iter().enumerate() {
            if let Drive::Teacher(zs) = drive {
                z.clone_from(&zs[t]);
            }
            let cap = self.step(&state, &z, a)?;
            state = cap.state.clone();
            if let Drive::Feedback = drive {
                z.clone_from(&cap.output);
            }
            predictions.push(cap.output.clone());
            steps.push(cap);
        }
        Ok(Rollout { predictions, steps })
    }
}
