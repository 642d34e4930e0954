//! Layer-wise relevance propagation through one LSTM step.
//!
//! Weighted connections use the ε-rule
//! `R_i = Σ_j w_ij·x_i / (z_j + ε·sign(z_j)) · R_j` with `sign(0) = +1`;
//! bias shares are absorbed. Multiplicative gate–signal connections give
//! everything to the signal and nothing to the gate.

use crate::error::{Error, Result};
use crate::nets::{Lstm, StepCapture, GATE_CANDIDATE};
use crate::scalar::Real;

pub const DEFAULT_EPSILON: f64 = 0.01;

/// Where relevance entering a weighted layer went.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonFlow<T> {
    pub inputs: Vec<T>,
    /// Total share attributed to biases.
    pub bias_absorbed: T,
    /// Total share swallowed by the stabilizer.
    pub epsilon_absorbed: T,
}

/// ε-rule through `z = W x + b`, `W` given row-wise as `weight(j, i)`.
pub fn epsilon_rule<T: Real>(
    outputs: usize,
    x: &[T],
    weight: impl Fn(usize, usize) -> T,
    bias: impl Fn(usize) -> T,
    relevance: &[T],
    eps: T,
) -> Result<EpsilonFlow<T>> {
    if relevance.len() != outputs {
        return Err(Error::shape(format!(
            "{} relevances for {outputs} outputs",
            relevance.len()
        )));
    }
    let mut inputs = vec![T::zero(); x.len()];
    let mut bias_absorbed = T::zero();
    let mut epsilon_absorbed = T::zero();
    for (j, &rj) in relevance.iter().enumerate() {
        if rj == T::zero() {
            continue;
        }
        let b = bias(j);
        let z = x.iter().enumerate().map(|(i, &xi)| weight(j, i) * xi).sum::<T>() + b;
        let stab = eps * z.sign_nonneg();
        let denom = z + stab;
        if denom == T::zero() {
            // Only reachable with ε = 0 and a zero pre-activation: nothing flows.
            epsilon_absorbed += rj;
            continue;
        }
        let s = rj / denom;
        for (i, &xi) in x.iter().enumerate() {
            inputs[i] += weight(j, i) * xi * s;
        }
        bias_absorbed += b * s;
        epsilon_absorbed += stab * s;
    }
    Ok(EpsilonFlow {
        inputs,
        bias_absorbed,
        epsilon_absorbed,
    })
}

/// Gate–signal product: `(R_gate, R_signal) = (0, R)`.
#[inline]
pub fn multiplicative_rule<T: Real>(relevance: T) -> (T, T) {
    (T::zero(), relevance)
}

/// Relevance of one step's inputs plus internal maps for audit.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceVector<T> {
    pub r_z: Vec<T>,
    pub r_a: Vec<T>,
    pub r_h_prev: Vec<T>,
    pub r_c_prev: Vec<T>,
    /// Relevance on the new hidden state.
    pub r_h: Vec<T>,
    /// Relevance on the new cell state.
    pub r_c: Vec<T>,
    /// Relevance on the candidate `g`.
    pub r_g: Vec<T>,
    /// Relevance on the input, forget and output gates (zero by rule).
    pub r_gates: Vec<T>,
    pub injected: T,
    /// `ΣR_z + ΣR_a + ΣR_h_prev + ΣR_c_prev`.
    pub recovered: T,
    pub bias_absorbed: T,
    /// Sum of the stabilizer shares, tracked layer by layer.
    pub epsilon_absorbed: T,
    /// Lost to the ε stabilizer: `injected − recovered − bias_absorbed`.
    pub leaked: T,
}

impl<T: Real> RelevanceVector<T> {
    pub fn input_total(&self) -> T {
        self.r_z.iter().chain(&self.r_a).copied().sum()
    }
}

/// Propagates unit relevance on every predicted latent back to `z ⊕ a`,
/// the previous hidden state and the previous cell state.
pub fn lrp<T: Real>(lstm: &Lstm<T>, capture: &StepCapture<T>, eps: T) -> Result<RelevanceVector<T>> {
    lrp_from(lstm, capture, eps, &vec![T::one(); lstm.latent_dim()])
}

#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail the check
pub fn lrp_from<T: Real>(lstm: &Lstm<T>, capture: &StepCapture<T>, eps: T, r_out: &[T]) -> Result<RelevanceVector<T>> {
    let (cells, latent) = (lstm.cells(), lstm.latent_dim());
    if capture.input.len() != lstm.input_dim() || capture.state.h.len() != cells || capture.prev.c.len() != cells {
        return Err(Error::shape("capture does not belong to this model"));
    }
    if !(eps >= T::zero()) {
        return Err(Error::invalid("ε must be non-negative"));
    }
    let injected: T = r_out.iter().copied().sum();

    // Head: ẑ = W h + b.
    let head = epsilon_rule(
        latent,
        &capture.state.h,
        |j, k| lstm.head_w[(j, k)],
        |j| lstm.head_b[j],
        r_out,
        eps,
    )?;
    let r_h = head.inputs;

    // h = o · tanh(c): the output gate is a gate; tanh is elementwise.
    let mut r_gates = vec![T::zero(); 3 * cells];
    let mut r_c = vec![T::zero(); cells];
    for k in 0..cells {
        let (gate, signal) = multiplicative_rule(r_h[k]);
        r_gates[2 * cells + k] = gate;
        r_c[k] = signal;
    }

    // c = f·c_prev + i·g: ε-rule over the two summands, then gate/signal splits.
    let mut r_c_prev = vec![T::zero(); cells];
    let mut r_g = vec![T::zero(); cells];
    let mut epsilon_absorbed = head.epsilon_absorbed;
    for k in 0..cells {
        let terms = [
            capture.forget_gate[k] * capture.prev.c[k],
            capture.input_gate[k] * capture.candidate[k],
        ];
        let flow = epsilon_rule(1, &[T::one(), T::one()], |_, i| terms[i], |_| T::zero(), &[r_c[k]], eps)?;
        let (rf, rcp) = multiplicative_rule(flow.inputs[0]);
        let (ri, rg) = multiplicative_rule(flow.inputs[1]);
        r_gates[cells + k] = rf;
        r_gates[k] = ri;
        r_c_prev[k] = rcp;
        r_g[k] = rg;
        epsilon_absorbed += flow.epsilon_absorbed;
    }

    // g = tanh(W_ih x + W_hh h_prev + b) over the candidate block.
    let x: Vec<T> = capture.input.iter().chain(&capture.prev.h).copied().collect();
    let n_in = lstm.input_dim();
    let cand = epsilon_rule(
        cells,
        &x,
        |k, i| {
            let row = lstm.gate_row(GATE_CANDIDATE, k);
            if i < n_in {
                lstm.w_ih[(row, i)]
            } else {
                lstm.w_hh[(row, i - n_in)]
            }
        },
        |k| lstm.bias[lstm.gate_row(GATE_CANDIDATE, k)],
        &r_g,
        eps,
    )?;
    epsilon_absorbed += cand.epsilon_absorbed;
    let r_z = cand.inputs[..latent].to_vec();
    let r_a = cand.inputs[latent..n_in].to_vec();
    let r_h_prev = cand.inputs[n_in..].to_vec();
    let recovered: T = r_z.iter().chain(&r_a).chain(&r_h_prev).chain(&r_c_prev).copied().sum();
    let bias_absorbed = head.bias_absorbed + cand.bias_absorbed;
    Ok(RelevanceVector {
        r_z,
        r_a,
        r_h_prev,
        r_c_prev,
        r_h,
        r_c,
        r_g,
        r_gates,
        injected,
        recovered,
        bias_absorbed,
        epsilon_absorbed,
        leaked: injected - recovered - bias_absorbed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{ActionTriple, LstmState};

    #[test]
    fn two_input_linear_layer() {
        let w = [2.0f64, 3.0];
        let f = epsilon_rule(1, &[1.0, 1.0], |_, i| w[i], |_| 0.0, &[1.0], 0.0).unwrap();
        assert!((f.inputs[0] - 0.4).abs() < 1e-15 && (f.inputs[1] - 0.6).abs() < 1e-15);
        assert_eq!(f.epsilon_absorbed, 0.0);
    }

    #[test]
    fn sign_of_zero_is_positive() {
        // z = 0 exactly: the stabilizer is +ε, so all relevance is absorbed.
        let w = [1.0f64, -1.0];
        let f = epsilon_rule(1, &[1.0, 1.0], |_, i| w[i], |_| 0.0, &[1.0], 0.5).unwrap();
        assert_eq!(f.inputs, vec![2.0, -2.0]);
        assert_eq!(f.epsilon_absorbed, 1.0);
    }

    #[test]
    fn gates_get_nothing() {
        assert_eq!(multiplicative_rule(0.7f64), (0.0, 0.7));
        let m = Lstm::<f64>::random(4, 6, 1.0, 5);
        let cap = m
            .step(
                &LstmState {
                    h: vec![0.1; 6],
                    c: vec![0.3; 6],
                },
                &[0.2, -0.1, 0.4, 1.0],
                &ActionTriple::new(1.0, 90.0, 20.0),
            )
            .unwrap();
        let r = lrp(&m, &cap, 0.01).unwrap();
        assert!(r.r_gates.iter().all(|&v| v == 0.0));
        let total = r.recovered + r.bias_absorbed + r.leaked;
        assert!((total - r.injected).abs() < 1e-12);
        assert!((r.leaked - r.epsilon_absorbed).abs() < 1e-12);
    }
}
