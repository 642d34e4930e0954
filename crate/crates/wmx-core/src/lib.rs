//! Explainability toolkit for VAE-LSTM world models.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the usual double-precision choice.

pub mod error;
pub mod featviz;
pub mod latentgrid;
pub mod lstm_xai;
pub mod nets;
pub mod numerics;
pub mod rgae;
pub mod scalar;
pub mod scenario;
pub mod store;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix64 = numerics::Matrix<f64>;
pub type Vae64 = nets::Vae<f64>;
pub type Lstm64 = nets::Lstm<f64>;
pub type Basis64 = rgae::SingularBasis<f64>;
