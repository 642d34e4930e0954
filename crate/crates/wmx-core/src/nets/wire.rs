//! Hand-wired fixture networks with designed, provable behaviours.
//!
//! The LSTM constructions rely on saturated gates: a pre-activation of ±40
//! drives a sigmoid to within 5e-18 of 0 or 1, which is exact in `f64`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{ConvLayer, DenseLayer};
use super::lstm::{Lstm, ACTION_DIM, GATE_CANDIDATE, GATE_FORGET, GATE_INPUT, GATE_OUTPUT};
use super::vae::Vae;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Real;
use crate::store::{Activation, ClassFrame, FrameShape, LayerSpec, Stage};

/// Pre-activation that saturates a sigmoid gate.
pub const SATURATE: f64 = 40.0;
/// Gain of the comparator cells' step functions.
const COMPARATOR_GAIN: f64 = 4.0e4;
/// Gain of the pulse cell's gate logic.
const PULSE_GAIN: f64 = 20.0;

/// A cell whose hidden-state profile is prescribed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignedCell {
    /// High on the frame interval `[start, end)`, low elsewhere.
    Pulse { start: usize, end: usize },
    /// Follows action component `component` (0 = a0, 1 = a1, 2 = a2);
    /// `sign = -1` mirrors it.
    Tracker { component: usize, sign: f64 },
}

#[derive(Debug, Clone)]
pub struct WiringSpec {
    pub latent_dim: usize,
    pub cells: usize,
    /// Number of frames the pulse clock must resolve.
    pub horizon: usize,
    pub designed: Vec<DesignedCell>,
    /// Scale of the remaining cells' random weights; weights are uniform
    /// with standard deviation `noise/√fan_in`.
    pub noise: f64,
    pub seed: u64,
}

/// Hand-wired LSTM and where its designed cells landed.
#[derive(Debug, Clone)]
pub struct WiredLstm<T> {
    pub lstm: Lstm<T>,
    /// Index of each designed cell, in spec order.
    pub designed: Vec<usize>,
    /// Clock and comparator cells supporting the pulse cells.
    pub helpers: Vec<usize>,
}

impl<T: Real> WiredLstm<T> {
    /// Cells carrying random weights.
    pub fn noise_cells(&self) -> Vec<usize> {
        let mut taken = vec![false; self.lstm.cells()];
        for &k in self.designed.iter().chain(&self.helpers) {
            taken[k] = true;
        }
        (0..taken.len()).filter(|&k| !taken[k]).collect()
    }
}

struct Wiring<'a, T> {
    m: &'a mut Lstm<T>,
    inputs: usize,
}

impl<T: Real> Wiring<'_, T> {
    fn clear(&mut self, cell: usize) {
        for gate in 0..4 {
            let row = self.m.gate_row(gate, cell);
            for j in 0..self.inputs {
                self.m.w_ih[(row, j)] = T::zero();
            }
            for j in 0..self.m.cells() {
                self.m.w_hh[(row, j)] = T::zero();
            }
            self.m.bias[row] = T::zero();
        }
    }

    fn bias(&mut self, gate: usize, cell: usize, v: f64) {
        let row = self.m.gate_row(gate, cell);
        self.m.bias[row] = T::lit(v);
    }

    fn rec(&mut self, gate: usize, cell: usize, from: usize, v: f64) {
        let row = self.m.gate_row(gate, cell);
        self.m.w_hh[(row, from)] = T::lit(v);
    }

    fn inp(&mut self, gate: usize, cell: usize, from: usize, v: f64) {
        let row = self.m.gate_row(gate, cell);
        self.m.w_ih[(row, from)] = T::lit(v);
    }

    /// Input and output gates open; forget gate open or shut.
    fn gates(&mut self, cell: usize, remember: bool) {
        self.bias(GATE_INPUT, cell, SATURATE);
        self.bias(GATE_OUTPUT, cell, SATURATE);
        self.bias(GATE_FORGET, cell, if remember { SATURATE } else { -SATURATE });
    }
}

/// Builds an LSTM whose designed cells follow the requested profiles.
///
/// A pulse needs a clock cell (`c_t = (t+1)/horizon`) and four comparator
/// cells, shared by every pulse with the same interval. The comparators read
/// the clock one step late and the pulse reads the comparators one step late,
/// so thresholds are shifted accordingly. Designed and helper cells ignore the
/// latent input and all noise cells.
///
/// A hidden state is `o·tanh(c)`. After a sign change the cell state can only
/// move by one unit, so on the first frame of a pulse and the first frame
/// after it (and frame 0) the sigmoid-normalized trace sits at
/// `σ(±tanh 1) ≈ 0.682 / 0.318`. Deeper inside and outside it clears 0.72 / 0.28.
pub fn hand_wire<T: Real>(spec: &WiringSpec) -> Result<WiredLstm<T>> {
    let pulses: Vec<(usize, usize)> = spec
        .designed
        .iter()
        .filter_map(|d| match *d {
            DesignedCell::Pulse { start, end } => Some((start, end)),
            DesignedCell::Tracker { .. } => None,
        })
        .collect();
    let mut intervals = pulses.clone();
    intervals.sort_unstable();
    intervals.dedup();
    let helper_count = if intervals.is_empty() {
        0
    } else {
        1 + 4 * intervals.len()
    };
    let needed = spec.designed.len() + helper_count;
    if spec.cells < needed {
        return Err(Error::Infeasible(format!(
            "{} designed cells need {needed} cells including helpers, model has {}",
            spec.designed.len(),
            spec.cells
        )));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(Error::Infeasible("noise level must be finite and non-negative".into()));
    }
    for d in &spec.designed {
        match *d {
            DesignedCell::Pulse { start, end } => {
                if start >= end {
                    return Err(Error::Infeasible(format!("pulse interval [{start}, {end}) is empty")));
                }
                if end > spec.horizon {
                    return Err(Error::Infeasible(format!(
                        "pulse end {end} exceeds the horizon {}",
                        spec.horizon
                    )));
                }
            }
            DesignedCell::Tracker { component, sign } => {
                if component >= ACTION_DIM {
                    return Err(Error::Infeasible(format!(
                        "action component {component} does not exist"
                    )));
                }
                if sign != 1.0 && sign != -1.0 {
                    return Err(Error::Infeasible("tracker sign must be +1 or -1".into()));
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut lstm = Lstm::<T>::zeros(spec.latent_dim, spec.cells);
    let inputs = lstm.input_dim();
    let b_in = spec.noise * (3.0 / (inputs + spec.cells) as f64).sqrt();
    for v in lstm
        .w_ih
        .as_mut_slice()
        .iter_mut()
        .chain(lstm.w_hh.as_mut_slice())
        .chain(&mut lstm.bias)
    {
        *v = T::lit(rng.gen_range(-b_in..=b_in));
    }
    let b_out = spec.noise * (3.0 / spec.cells as f64).sqrt();
    for v in lstm.head_w.as_mut_slice().iter_mut().chain(&mut lstm.head_b) {
        *v = T::lit(rng.gen_range(-b_out..=b_out));
    }

    let mut order: Vec<usize> = (0..spec.cells).collect();
    order.shuffle(&mut rng);
    let mut slots = order.into_iter();
    let designed: Vec<usize> = slots.by_ref().take(spec.designed.len()).collect();
    let helpers: Vec<usize> = slots.take(helper_count).collect();

    let mut w = Wiring { m: &mut lstm, inputs };
    for &k in designed.iter().chain(&helpers) {
        w.clear(k);
    }

    let mut comparators = Vec::new();
    if let Some((&clock, rest)) = helpers.split_first() {
        let g0 = 1.0 / spec.horizon as f64;
        w.gates(clock, true);
        w.bias(GATE_CANDIDATE, clock, g0.atanh());
        for (n, &(r1, r2)) in intervals.iter().enumerate() {
            let cells = &rest[4 * n..4 * n + 4];
            // Comparator for threshold r at step t sees tanh(t·g0) from the
            // clock's previous output and switches between t = r−2 and r−1.
            for (&cell, r) in cells.iter().zip([r1, r1 + 1, r2, r2 + 1]) {
                let theta = ((r as f64 - 1.5) * g0).tanh();
                w.gates(cell, false);
                w.rec(GATE_CANDIDATE, cell, clock, COMPARATOR_GAIN);
                w.bias(GATE_CANDIDATE, cell, -COMPARATOR_GAIN * theta);
            }
            comparators.push(((r1, r2), [cells[0], cells[1], cells[2], cells[3]]));
        }
    }

    let kappa = 1f64.tanh();
    for (d, &cell) in spec.designed.iter().zip(&designed) {
        match *d {
            DesignedCell::Pulse { start, end } => {
                let [a, ap, b, bp] = comparators
                    .iter()
                    .find(|(iv, _)| *iv == (start, end))
                    .map(|(_, c)| *c)
                    .expect("every pulse interval has comparators");
                let s = PULSE_GAIN / kappa;
                w.gates(cell, true);
                // g = β(s_A − s_B − 1): +β inside, −β outside.
                w.rec(GATE_CANDIDATE, cell, a, s);
                w.rec(GATE_CANDIDATE, cell, b, -s);
                w.bias(GATE_CANDIDATE, cell, -PULSE_GAIN);
                // f = β(1 − (s_A − s_A') − (s_B − s_B')): shut on both edges.
                w.rec(GATE_FORGET, cell, a, -s);
                w.rec(GATE_FORGET, cell, ap, s);
                w.rec(GATE_FORGET, cell, b, -s);
                w.rec(GATE_FORGET, cell, bp, s);
                w.bias(GATE_FORGET, cell, PULSE_GAIN);
            }
            DesignedCell::Tracker { component, sign } => {
                w.gates(cell, false);
                w.inp(GATE_CANDIDATE, cell, spec.latent_dim + component, sign);
            }
        }
    }
    Ok(WiredLstm {
        lstm,
        designed,
        helpers,
    })
}

/// LSTM whose prediction reproduces its latent input up to `O(gain²)`.
///
/// Cell `k` computes `h_k = tanh(tanh(gain·z_k))` with no memory and the head
/// rescales by `1/gain`.
pub fn passthrough_lstm<T: Real>(latent_dim: usize, gain: f64) -> Result<Lstm<T>> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::Infeasible("passthrough gain must be positive".into()));
    }
    let mut lstm = Lstm::<T>::zeros(latent_dim, latent_dim);
    let inputs = lstm.input_dim();
    let mut w = Wiring { m: &mut lstm, inputs };
    for k in 0..latent_dim {
        w.gates(k, false);
        w.inp(GATE_CANDIDATE, k, k, gain);
    }
    for k in 0..latent_dim {
        lstm.head_w[(k, k)] = T::lit(1.0 / gain);
    }
    Ok(lstm)
}

/// LSTM that predicts `output` regardless of its input.
pub fn constant_lstm<T: Real>(output: &[T], cells: usize) -> Lstm<T> {
    let mut lstm = Lstm::<T>::zeros(output.len(), cells);
    lstm.head_b = output.to_vec();
    lstm
}

/// A latch: input gate opened by the movement flag, forget gate saturated
/// open, candidate fixed at `value`. Cell 0 stores `value` once `a0 = 1`
/// and holds it while `a0 = 0`.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail the check
pub fn latch_lstm<T: Real>(latent_dim: usize, value: f64) -> Result<Lstm<T>> {
    if !(value.abs() < 1.0) {
        return Err(Error::Infeasible("latched value must lie in (-1, 1)".into()));
    }
    let mut lstm = Lstm::<T>::zeros(latent_dim, 1);
    let inputs = lstm.input_dim();
    let mut w = Wiring { m: &mut lstm, inputs };
    w.bias(GATE_FORGET, 0, SATURATE);
    w.bias(GATE_OUTPUT, 0, SATURATE);
    w.inp(GATE_INPUT, 0, latent_dim, 2.0 * SATURATE);
    w.bias(GATE_INPUT, 0, -SATURATE);
    w.bias(GATE_CANDIDATE, 0, value.atanh());
    Ok(lstm)
}

/// Autoencoder that maps each of the given frames to its own one-hot latent
/// and back.
///
/// One full-frame convolution per template counts matching pixels; with bias
/// `−(HW − ½)` and ReLU only an exact match fires (at ½). The mean head scales
/// by 2 and the decoder emits `gain`-scaled one-hot templates as logits.
pub fn hand_wire_autoencoder<T: Real>(frames: &[ClassFrame], gain: f64) -> Result<Vae<T>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Infeasible("autoencoder needs at least one frame".into()))?;
    let (h, w, classes) = (first.height(), first.width(), first.class_count() as usize);
    if frames
        .iter()
        .any(|f| f.height() != h || f.width() != w || f.class_count() as usize != classes)
    {
        return Err(Error::Infeasible(
            "autoencoder frames must share shape and class count".into(),
        ));
    }
    for (i, a) in frames.iter().enumerate() {
        if frames[..i].iter().any(|b| b == a) {
            return Err(Error::Infeasible(format!("frame {i} duplicates an earlier frame")));
        }
    }
    let n = frames.len();
    let hw = h * w;
    let templates: Vec<Vec<T>> = frames.iter().map(ClassFrame::one_hot).collect();
    let conv = ConvLayer {
        spec: LayerSpec::conv("enc1", classes, n, [h, w], [1, 1], [0, 0], Activation::Relu),
        weight: templates.concat(),
        bias: vec![T::lit(0.5 - hw as f64); n],
    };
    let mut head = Matrix::zeros(n, n);
    for k in 0..n {
        head[(k, k)] = T::lit(2.0);
    }
    let mean_head = DenseLayer {
        spec: LayerSpec::dense("mu", Stage::MeanHead, n, n, Activation::Identity),
        weight: head,
        bias: vec![T::zero(); n],
    };
    let mut dec = Matrix::zeros(classes * hw, n);
    for (k, t) in templates.iter().enumerate() {
        for (r, &v) in t.iter().enumerate() {
            dec[(r, k)] = v * T::lit(gain);
        }
    }
    let decoder = DenseLayer {
        spec: LayerSpec::dense("dec_out", Stage::Decoder, n, classes * hw, Activation::Identity),
        weight: dec,
        bias: vec![T::zero(); classes * hw],
    };
    let frame = FrameShape {
        channels: classes,
        height: h,
        width: w,
    };
    Vae::from_layers(frame, vec![conv], mean_head, vec![decoder])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::lstm::{ActionTriple, Drive, LstmState};

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn pulse_cell_profile() {
        let spec = WiringSpec {
            latent_dim: 4,
            cells: 32,
            horizon: 400,
            designed: vec![DesignedCell::Pulse { start: 80, end: 159 }],
            noise: 1.0,
            seed: 3,
        };
        let wired = hand_wire::<f64>(&spec).unwrap();
        let actions = vec![ActionTriple::new(1.0, 180.0, 0.0); 400];
        let run = wired.lstm.rollout(&[0.0; 4], &actions, Drive::Feedback).unwrap();
        let cell = wired.designed[0];
        for (t, s) in run.steps.iter().enumerate() {
            let v = sig(s.state.h[cell]);
            let inside = (80..159).contains(&t);
            if [0, 80, 159].contains(&t) {
                // Transition frames: bounded by σ(±tanh 1).
                let edge = sig(1f64.tanh());
                assert!((v - if inside { edge } else { 1.0 - edge }).abs() < 1e-6, "t={t} v={v}");
            } else if inside {
                assert!(v > 0.72, "t={t} v={v}");
            } else {
                assert!(v < 0.28, "t={t} v={v}");
            }
        }
    }

    #[test]
    fn infeasible_specs() {
        let base = WiringSpec {
            latent_dim: 2,
            cells: 4,
            horizon: 100,
            designed: vec![DesignedCell::Pulse { start: 10, end: 20 }],
            noise: 0.5,
            seed: 0,
        };
        // Five helpers plus the pulse do not fit in four cells.
        assert!(matches!(hand_wire::<f64>(&base), Err(Error::Infeasible(_))));
        let mut s = base.clone();
        s.cells = 10;
        s.designed = vec![DesignedCell::Pulse { start: 20, end: 20 }];
        assert!(hand_wire::<f64>(&s).is_err());
        s.designed = vec![DesignedCell::Pulse { start: 20, end: 101 }];
        assert!(hand_wire::<f64>(&s).is_err());
        s.designed = vec![DesignedCell::Tracker {
            component: 3,
            sign: 1.0,
        }];
        assert!(hand_wire::<f64>(&s).is_err());
    }

    #[test]
    fn no_designed_cells_is_random_model() {
        let spec = WiringSpec {
            latent_dim: 3,
            cells: 6,
            horizon: 10,
            designed: vec![],
            noise: 1.0,
            seed: 11,
        };
        let wired = hand_wire::<f64>(&spec).unwrap();
        assert!(wired.designed.is_empty() && wired.helpers.is_empty());
        assert_eq!(wired.noise_cells().len(), 6);
        assert!(wired
            .lstm
            .w_hh
            .as_slice()
            .iter()
            .all(|v| v.abs() <= (3.0f64 / 12.0).sqrt()));
        assert!(wired.lstm.w_hh.as_slice().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn latch_holds_value() {
        let m = latch_lstm::<f64>(2, 0.6).unwrap();
        let mut state = LstmState::zeros(1);
        state = m
            .step(&state, &[0.0, 0.0], &ActionTriple::new(1.0, 0.0, 0.0))
            .unwrap()
            .state;
        let stored = state.c[0];
        assert!((stored - 0.6).abs() < 1e-6);
        for _ in 0..10 {
            state = m
                .step(&state, &[0.3, -0.2], &ActionTriple::new(0.0, 90.0, 10.0))
                .unwrap()
                .state;
            assert!((state.c[0] - stored).abs() < 1e-6);
        }
    }

    #[test]
    fn passthrough_predicts_input() {
        let m = passthrough_lstm::<f64>(3, 1e-4).unwrap();
        let z = [0.5, -1.25, 2.0];
        let cap = m
            .step(&LstmState::zeros(3), &z, &ActionTriple::new(1.0, 270.0, 40.0))
            .unwrap();
        for (p, q) in cap.output.iter().zip(z) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn autoencoder_round_trips_templates() {
        let frames: Vec<ClassFrame> = (0..3u8)
            .map(|k| {
                let data = (0..6 * 5).map(|p| (p as u8 + k) % 4).collect();
                ClassFrame::new(6, 5, 4, data).unwrap()
            })
            .collect();
        let vae = hand_wire_autoencoder::<f64>(&frames, 10.0).unwrap();
        for (k, f) in frames.iter().enumerate() {
            let z = vae.encode(f).unwrap();
            let mut want = vec![0.0; 3];
            want[k] = 1.0;
            assert_eq!(z, want);
            assert_eq!(&vae.decode(&z).unwrap().frame, f);
        }
    }
}
