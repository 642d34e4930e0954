//! Deterministic forward passes for the convolutional VAE and the LSTM
//! predictor, plus hand-wired fixture networks.

mod layers;
mod lstm;
mod vae;
mod wire;

pub use layers::{ConvLayer, DenseLayer, FeatureMap};
pub use lstm::{
    ActionTriple, Drive, Lstm, LstmState, Rollout, StepCapture, ACTION_DIM, GATE_CANDIDATE, GATE_FORGET, GATE_INPUT,
    GATE_OUTPUT, PAPER_CELLS,
};
pub use vae::{softmax_channels, Decoded, Vae, VaeArchitecture, PAPER_CONV_LAYERS, PAPER_LATENT_DIM};
pub use wire::{
    constant_lstm, hand_wire, hand_wire_autoencoder, latch_lstm, passthrough_lstm, DesignedCell, WiredLstm, WiringSpec,
    SATURATE,
};
